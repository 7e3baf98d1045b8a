//! Trains two tasks of two classes each, reports accuracy on all seen classes
//! after every task, and compares against the finetune ablation.
//!
//! cargo run --release --example train_incremental -- [checkpoint path]

use std::time::Instant;

use inemo::bench::{Dataset, DatasetConfig};
use inemo::experiment::{evaluate_classification, Experiment, ExperimentConfig};

fn experiment(overrides: &[(&str, &str)]) -> inemo::Result<Experiment> {
    let (ds, samples) = Dataset::generate(&DatasetConfig {
        num_classes: 4,
        per_class_train: 60,
        per_class_test: 10,
        ..DatasetConfig::default()
    })?;
    let mut cfg = ExperimentConfig::default();
    cfg.set("split", "B0+2")?;
    cfg.set("epochs", "10")?;
    cfg.set("replay_capacity", "40")?;
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    Experiment::new(cfg, ds, samples)
}

fn main() -> inemo::Result<()> {
    for (name, overrides) in [
        ("full", &[][..]),
        ("finetune", &[("replay", "false"), ("lambda_kd", "0"), ("lambda_etf", "0")][..]),
    ] {
        let exp = experiment(overrides)?;
        let mut ck = exp.new_checkpoint()?;
        let t0 = Instant::now();
        for i in 0..exp.task_count() {
            let trace = exp.train_next(&mut ck)?;
            let last = trace.epoch_means.last().copied().unwrap_or_default();
            let first = evaluate_classification(&ck.model, &exp.library, &exp.sequence.tasks[0].test)?;
            println!(
                "{name} task {i} classes {:?}: seen-class accuracy {:.3}, first-task accuracy {:.3}, \
                 last epoch cont {:.3} etf {:.3} kd {:.4} ({:.1}s)",
                exp.sequence.tasks[i].classes,
                ck.history[i].accuracy,
                first.accuracy,
                last.l_cont,
                last.l_etf,
                last.l_kd,
                t0.elapsed().as_secs_f64()
            );
        }
        if name == "full" {
            if let Some(path) = std::env::args().nth(1) {
                let digest = ck.save(path.as_ref())?;
                println!("checkpoint {path} sha256 {digest}");
            }
        }
    }
    Ok(())
}
