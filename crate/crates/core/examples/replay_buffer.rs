//! Pose-aware exemplar selection and class rebalancing as new classes arrive.

use std::f64::consts::TAU;

use inemo::geometry::Pose;
use inemo::memory::{select_exemplars, Exemplar, ReplayBuffer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn samples(rng: &mut ChaCha8Rng, class_id: u32, first: u64, n: usize) -> Vec<Exemplar> {
    (0..n)
        .map(|i| Exemplar {
            sample_id: first + i as u64,
            class_id,
            pose: Pose::new(rng.random_range(0.0..TAU), 0.2, 0.0, 5.0),
        })
        .collect()
}

fn main() -> inemo::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let bins = 8;
    let mut buffer = ReplayBuffer::new(60, bins)?;
    let mut classes = Vec::new();
    let mut next = 0u64;
    for task in [vec![0u32, 1], vec![2, 3], vec![4, 5]] {
        classes.extend(&task);
        let quotas = buffer.rebalance(&classes, &mut rng)?;
        for &c in &task {
            let pool = samples(&mut rng, c, next, 100);
            next += 100;
            let sel = select_exemplars(&pool, quotas[&c], bins, &mut rng)?;
            buffer.insert_class(c, sel.exemplars)?;
        }
        println!("after classes {task:?}: {} stored", buffer.len());
        for c in buffer.class_ids() {
            println!("  class {c}: {:2} exemplars, per bin {:?}", buffer.class_count(c), buffer.bin_counts(c));
        }
    }
    Ok(())
}
