//! Generates a small synthetic dataset on disk and reads it back.
//!
//! cargo run --example generate_dataset -- [output dir]

use std::path::PathBuf;

use inemo::bench::{occlude, Dataset, DatasetConfig, OcclusionLevel, Split};

fn main() -> inemo::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("inemo-example-data"));
    let config = DatasetConfig {
        num_classes: 4,
        per_class_train: 10,
        per_class_test: 4,
        ..DatasetConfig::default()
    };
    let (ds, samples) = Dataset::generate(&config)?;
    ds.write(&out, &samples)?;
    println!("wrote {} samples to {}", ds.entries.len(), out.display());

    let back = Dataset::open(&out)?;
    let loaded = back.load_samples(&out)?;
    assert_eq!(loaded.len(), samples.len());
    for c in &back.classes {
        println!("class {}: dims {:.2?}", c.id, c.dims);
    }

    let test = back
        .entries
        .iter()
        .find(|e| e.record.split == Split::Test)
        .expect("test sample");
    for level in OcclusionLevel::ALL {
        let s = occlude(&loaded[&test.record.id], level, test.record.background_seed)?;
        println!("{level}: {:.0}% of the object hidden", 100.0 * s.occluded_fraction);
    }
    Ok(())
}
