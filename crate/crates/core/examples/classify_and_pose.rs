//! Trains a three-class model, then classifies held-out images and estimates
//! their pose with template matching plus render-and-compare refinement.
//!
//! cargo run --release --example classify_and_pose

use inemo::bench::{Dataset, DatasetConfig};
use inemo::experiment::{Experiment, ExperimentConfig};
use inemo::geometry::rotation_error;
use inemo::inference::Predictor;

fn main() -> inemo::Result<()> {
    let (ds, samples) = Dataset::generate(&DatasetConfig {
        num_classes: 3,
        per_class_train: 60,
        per_class_test: 4,
        ..DatasetConfig::default()
    })?;
    let mut cfg = ExperimentConfig::default();
    cfg.set("split", "3")?;
    cfg.set("epochs", "10")?;
    let exp = Experiment::new(cfg, ds, samples)?;
    let mut ck = exp.new_checkpoint()?;
    exp.train_next(&mut ck)?;
    println!("trained on {} samples", exp.sequence.tasks[0].train.len());

    let settings = exp.config.refine_settings();
    let predictor = Predictor::new(&ck.model, exp.config.template_count, 5.0)?;
    let mut correct = 0;
    let ids = exp.test_ids(1);
    for id in &ids {
        let s = &exp.samples[id];
        let c = predictor.classify(&s.image)?;
        correct += usize::from(c.class_id == s.class_id);
        let est = predictor.estimate_pose(&s.image, s.class_id, &settings)?;
        let err = rotation_error(&est.pose.rotation(), &s.pose.rotation())?;
        println!(
            "sample {id:3}: class {} predicted {} | pose error {:5.1} deg, loss {:.2} -> {:.2}",
            s.class_id,
            c.class_id,
            err.to_degrees(),
            est.init_loss,
            est.loss
        );
    }
    println!("accuracy {}/{}", correct, ids.len());
    Ok(())
}
