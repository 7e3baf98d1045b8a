//! Trains a small incremental model and prints the JSON evaluation report,
//! including accuracy under increasing occlusion.
//!
//! cargo run --release --example occlusion_benchmark

use inemo::bench::{Dataset, DatasetConfig};
use inemo::experiment::{Experiment, ExperimentConfig};

fn main() -> inemo::Result<()> {
    let (ds, samples) = Dataset::generate(&DatasetConfig {
        num_classes: 4,
        per_class_train: 60,
        per_class_test: 15,
        seed: 9,
        ..DatasetConfig::default()
    })?;
    let mut cfg = ExperimentConfig::default();
    cfg.apply_text("split = B0+2\nepochs = 10\nreplay_capacity = 40\neval_occlusion = none,l1,l2,l3\n")?;
    let exp = Experiment::new(cfg, ds, samples)?;
    let mut ck = exp.new_checkpoint()?;
    for _ in 0..exp.task_count() {
        exp.train_next(&mut ck)?;
    }
    let report = exp.evaluate(&ck)?;
    for level in ["none", "l1", "l2", "l3"] {
        println!("{level:>4}: {:.3}", report.occlusion_accuracy[level]);
    }
    println!("{}", serde_json::to_string_pretty(&report).expect("serializable report"));
    Ok(())
}
