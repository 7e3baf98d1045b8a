use inemo::bench::{Dataset, DatasetConfig};
use inemo::experiment::{Checkpoint, Experiment, ExperimentConfig};
use inemo::training::{train_task, TaskData};

fn experiment(classes: usize, per_class: usize, split: &str, extra: &[(&str, &str)]) -> Experiment {
    let (ds, samples) = Dataset::generate(&DatasetConfig {
        num_classes: classes,
        per_class_train: per_class,
        per_class_test: 3,
        seed: 7,
        image_width: 32,
        image_height: 32,
        ..DatasetConfig::default()
    })
    .unwrap();
    let mut cfg = ExperimentConfig::default();
    for (k, v) in [
        ("split", split),
        ("feature_dim", "12"),
        ("hidden_widths", "6,10"),
        ("mesh_vertices", "60"),
        ("bank_size", "32"),
        ("replay_capacity", "12"),
        ("batch_size", "4"),
        ("lr", "0.005"),
        ("unused_sample_size", "64"),
    ]
    .iter()
    .chain(extra)
    {
        cfg.set(k, v).unwrap();
    }
    Experiment::new(cfg, ds, samples).unwrap()
}

fn train_all(exp: &Experiment) -> (Checkpoint, Vec<inemo::training::TaskTrace>) {
    let mut ck = exp.new_checkpoint().unwrap();
    let traces = (0..exp.task_count())
        .map(|_| exp.train_next(&mut ck).unwrap())
        .collect();
    (ck, traces)
}

#[test]
fn loss_descends_on_a_single_class_task() {
    let exp = experiment(1, 10, "1", &[("epochs", "5"), ("lr_halve_every", "0")]);
    let (_, traces) = train_all(&exp);
    let means = &traces[0].epoch_means;
    assert_eq!(means.len(), 5);
    assert!(
        means[4].total < means[0].total,
        "first epoch {} last epoch {}",
        means[0].total,
        means[4].total
    );
    assert!(means.iter().all(|m| m.l_kd == 0.0), "no teacher on the first task");
}

#[test]
fn features_stay_unit_norm_and_runs_repeat_exactly() {
    let exp = experiment(4, 6, "B0+2", &[("epochs", "2")]);
    let (a, ta) = train_all(&exp);
    let (b, tb) = train_all(&exp);
    let steps = |t: &[inemo::training::TaskTrace]| -> Vec<String> {
        t.iter().flat_map(|t| t.steps.iter().map(|s| s.to_string())).collect()
    };
    assert_eq!(steps(&ta), steps(&tb));
    assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
    for c in a.model.class_ids() {
        assert!(a.model.meshes.get(c).unwrap().theta.max_norm_error() < 1e-9);
    }
    assert!(a.model.bank.features().max_norm_error() < 1e-9);
    assert!(ta[1].epoch_means.iter().all(|m| m.l_kd > 0.0), "second task distils");
}

fn first_task_theta_change(extra: &[(&str, &str)]) -> bool {
    let exp = experiment(4, 6, "B0+2", &[&[("epochs", "1")], extra].concat());
    let mut ck = exp.new_checkpoint().unwrap();
    exp.train_next(&mut ck).unwrap();
    let first = exp.sequence.tasks[0].classes.clone();
    let before: Vec<_> = first.iter().map(|&c| ck.model.meshes.get(c).unwrap().theta.clone()).collect();
    exp.train_next(&mut ck).unwrap();
    first
        .iter()
        .zip(&before)
        .any(|(&c, t)| ck.model.meshes.get(c).unwrap().theta != *t)
}

#[test]
fn old_meshes_change_only_through_replayed_exemplars() {
    assert!(!first_task_theta_change(&[("replay", "false")]));
    assert!(!first_task_theta_change(&[("momentum_on_replay", "false")]));
    assert!(first_task_theta_change(&[]));
}

#[test]
fn replay_buffer_and_bank_after_tasks() {
    let exp = experiment(4, 6, "B0+2", &[("epochs", "1")]);
    let (ck, _) = train_all(&exp);
    let replay = &ck.model.replay;
    assert_eq!(replay.class_ids(), vec![0, 1, 2, 3]);
    let counts: Vec<usize> = replay.class_ids().iter().map(|&c| replay.class_count(c)).collect();
    assert_eq!(counts, vec![3, 3, 3, 3]);
    assert_eq!(ck.model.tasks_trained, 2);
    assert_eq!(ck.history.len(), 2);
}

#[test]
fn retraining_a_class_is_rejected() {
    let exp = experiment(2, 4, "2", &[("epochs", "1")]);
    let mut ck = exp.new_checkpoint().unwrap();
    exp.train_next(&mut ck).unwrap();
    let task = TaskData {
        classes: vec![exp.dataset.class_info(0).unwrap()],
        sample_ids: exp.sequence.tasks[0].train.clone(),
    };
    let err = train_task(&mut ck.model, &task, &exp.library, &exp.config.train).unwrap_err();
    assert!(matches!(err, inemo::Error::AlreadyAllocated(0)), "{err}");
    assert!(exp.train_next(&mut ck).is_err(), "split exhausted");
}
