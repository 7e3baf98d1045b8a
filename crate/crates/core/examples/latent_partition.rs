//! Builds the equiangular class centroids, partitions a random population of
//! latent vectors among them and allocates initial features for two classes.

use inemo::latent::LatentPartition;
use inemo::vectors::dot;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> inemo::Result<()> {
    let classes = 6;
    let dim = 16;
    let mut p = LatentPartition::new(classes, dim, 20_000, 3)?;

    println!("centroid inner products (target {:.4}):", -1.0 / (classes as f64 - 1.0));
    for i in 0..classes {
        let row: Vec<String> = (0..classes)
            .map(|j| format!("{:+.4}", dot(p.centroids.row(i), p.centroids.row(j))))
            .collect();
        println!("  {}", row.join(" "));
    }
    for c in 0..classes as u32 {
        println!("class {c}: {} population members", p.members(c).len());
    }

    for c in [0u32, 1] {
        let theta = p.allocate_class(c, 100, 11 + c as u64)?;
        let mean: f64 = theta.rows().map(|t| dot(t, p.centroid(c))).sum::<f64>() / theta.len() as f64;
        println!("allocated class {c}: mean cosine to its centroid {mean:.3}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let unused = p.sample_unused(256, &mut rng);
    println!(
        "unused pool {} vectors, sampled {}",
        p.unused_pool().len(),
        unused.len()
    );
    Ok(())
}
