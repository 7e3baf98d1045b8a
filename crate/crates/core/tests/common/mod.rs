//! Oracles and property checks shared by the integration tests and the
//! acceptance suite.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::f64::consts::TAU;

use inemo::geometry::{build_cuboid, Mat3, Pose};
use inemo::memory::{select_exemplars, Exemplar, ReplayBuffer};
use inemo::training::{momentum_update, BackgroundBank, Correspondences, NeuralMesh};
use inemo::vectors::{normalize, VectorSet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- rotations

/// Principal matrix logarithm by inverse scaling and squaring: repeated
/// Denman-Beavers square roots until close to the identity, then the
/// Gregory series `log(I+X) = 2 atanh(X (2I+X)^-1)`.
pub fn logm(r: &Mat3) -> Mat3 {
    let id = Mat3::identity();
    let mut a = *r;
    let mut k = 0;
    while (a - id).norm() > 1e-3 {
        let (mut y, mut z) = (a, id);
        for _ in 0..100 {
            let yi = y.try_inverse().expect("invertible");
            let zi = z.try_inverse().expect("invertible");
            let ny = 0.5 * (y + zi);
            let nz = 0.5 * (z + yi);
            let done = (ny - y).norm() < 1e-16;
            y = ny;
            z = nz;
            if done {
                break;
            }
        }
        a = y;
        k += 1;
    }
    let x = a - id;
    let s = x * (2.0 * id + x).try_inverse().expect("invertible");
    let s2 = s * s;
    let mut term = s;
    let mut sum = Mat3::zeros();
    for n in 0..30 {
        sum += term / (2 * n + 1) as f64;
        term *= s2;
    }
    2.0 * sum * 2f64.powi(k)
}

/// `||logm(R1^T R2)||_F / sqrt(2)`.
pub fn logm_distance(r1: &Mat3, r2: &Mat3) -> f64 {
    logm(&(r1.transpose() * r2)).norm() / 2f64.sqrt()
}

/// `arccos((tr(R1^T R2) - 1) / 2)`.
pub fn arccos_distance(r1: &Mat3, r2: &Mat3) -> f64 {
    (((r1.transpose() * r2).trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

pub fn random_rotation<R: Rng>(rng: &mut R) -> Mat3 {
    Pose::new(
        rng.random_range(0.0..TAU),
        rng.random_range(-1.5..1.5),
        rng.random_range(-3.1..3.1),
        5.0,
    )
    .rotation()
}

pub fn random_axis<R: Rng>(rng: &mut R) -> inemo::geometry::Vec3 {
    loop {
        let v = inemo::geometry::Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if v.norm() > 0.1 {
            return v;
        }
    }
}

// ---------------------------------------------------------- momentum update

/// One random momentum-update case: a mesh, a visibility pattern and
/// observed features. Checks untouched rows are bit-identical, updated rows
/// match `normalize((1-eta) f + eta theta)`, and every row is unit-norm.
pub fn momentum_case(seed: u64, eta: f64, visible_fraction: f64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.random_range(2..24);
    let dims = [
        rng.random_range(0.5..2.0),
        rng.random_range(0.5..2.0),
        rng.random_range(0.5..2.0),
    ];
    let geometry = build_cuboid(dims, rng.random_range(8..120)).map_err(|e| e.to_string())?;
    let k = geometry.vertex_count();
    let theta = VectorSet::random_unit(&mut rng, dim, k);
    let mut mesh = NeuralMesh::new(0, geometry, theta, 0.3).map_err(|e| e.to_string())?;
    let before = mesh.theta.clone();
    let visible: Vec<bool> = (0..k).map(|_| rng.random_bool(visible_fraction)).collect();
    let vertices: Vec<u32> = (0..k as u32).filter(|&i| visible[i as usize]).collect();
    let features = VectorSet::random_unit(&mut rng, dim, vertices.len());
    let corr = Correspondences {
        class_id: 0,
        pixels: vertices.iter().map(|&v| v % 7).collect(),
        visible,
        vertices: vertices.clone(),
        features,
    };
    momentum_update(&mut mesh, &corr, eta).map_err(|e| e.to_string())?;
    for i in 0..k {
        match vertices.iter().position(|&v| v as usize == i) {
            None => {
                if mesh.theta.row(i) != before.row(i) {
                    return Err(format!("invisible vertex {i} changed"));
                }
            }
            Some(row) => {
                let mut expect: Vec<f64> = corr
                    .features
                    .row(row)
                    .iter()
                    .zip(before.row(i))
                    .map(|(f, t)| (1.0 - eta) * f + eta * t)
                    .collect();
                if normalize(&mut expect) > 1e-12 {
                    let err = expect
                        .iter()
                        .zip(mesh.theta.row(i))
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    if err > 1e-12 {
                        return Err(format!("vertex {i} differs from the oracle by {err}"));
                    }
                }
            }
        }
    }
    let norm_err = mesh.theta.max_norm_error();
    if norm_err > 1e-9 {
        return Err(format!("norm error {norm_err}"));
    }
    Ok(())
}

// ---------------------------------------------------------- background bank

/// Random insertion batches checked against a queue: after every push the
/// bank holds exactly the newest `capacity` vectors and evicts them oldest
/// first.
pub fn bank_fifo_case(capacity: usize, dim: usize, batches: &[usize], seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bank = BackgroundBank::new(capacity, dim, &mut rng).map_err(|e| e.to_string())?;
    let mut queue: VecDeque<Vec<f64>> = bank
        .eviction_order()
        .into_iter()
        .map(|s| bank.features().row(s).to_vec())
        .collect();
    for &n in batches {
        let n = n.min(capacity);
        let new = VectorSet::random_unit(&mut rng, dim, n);
        bank.push_features(&new).map_err(|e| e.to_string())?;
        for row in new.rows() {
            queue.pop_front();
            queue.push_back(row.to_vec());
        }
        let order = bank.eviction_order();
        if order.len() != capacity {
            return Err("bank size changed".into());
        }
        for (slot, expect) in order.iter().zip(&queue) {
            if bank.features().row(*slot) != expect.as_slice() {
                return Err(format!("slot {slot} out of FIFO order"));
            }
        }
        let ins = bank.inserted_at();
        if order.windows(2).any(|w| ins[w[0]] > ins[w[1]]) {
            return Err("insertion times not monotone in eviction order".into());
        }
        if bank.features().max_norm_error() > 1e-9 {
            return Err("bank lost unit norm".into());
        }
    }
    Ok(())
}

pub fn bank_strategy() -> impl Strategy<Value = (usize, usize, Vec<usize>, u64)> {
    (1usize..40, 1usize..9, prop::collection::vec(0usize..50, 0..25), any::<u64>())
}

// ------------------------------------------------------------ replay buffer

pub fn uniform_exemplars<R: Rng>(rng: &mut R, class_id: u32, first_id: u64, n: usize) -> Vec<Exemplar> {
    (0..n)
        .map(|i| Exemplar {
            sample_id: first_id + i as u64,
            class_id,
            pose: Pose::new(rng.random_range(0.0..TAU), 0.0, 0.0, 5.0),
        })
        .collect()
}

/// Replays the end-of-task buffer protocol for a sequence of tasks, each
/// `(new classes, samples per new class)`, and checks the buffer invariants
/// after every task.
pub fn replay_sequence_case(
    capacity: usize,
    bins: usize,
    tasks: &[(usize, usize)],
    seed: u64,
) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buffer = ReplayBuffer::new(capacity, bins).map_err(|e| e.to_string())?;
    let mut classes: Vec<u32> = Vec::new();
    let mut available: BTreeMap<u32, usize> = BTreeMap::new();
    let mut next_id = 0u64;
    for &(new, per_class) in tasks {
        let new_classes: Vec<u32> = (0..new as u32).map(|i| classes.len() as u32 + i).collect();
        classes.extend(&new_classes);
        let quotas = buffer.rebalance(&classes, &mut rng).map_err(|e| e.to_string())?;
        for &c in &new_classes {
            let samples = uniform_exemplars(&mut rng, c, next_id, per_class);
            next_id += per_class as u64;
            available.insert(c, per_class);
            let q = quotas[&c];
            if q == 0 || samples.is_empty() {
                continue;
            }
            let sel = select_exemplars(&samples, q, bins, &mut rng).map_err(|e| e.to_string())?;
            if sel.exemplars.len() != q.min(per_class) {
                return Err(format!("class {c}: selected {} of quota {q}", sel.exemplars.len()));
            }
            buffer.insert_class(c, sel.exemplars).map_err(|e| e.to_string())?;
        }

        if buffer.len() > capacity {
            return Err(format!("{} stored over capacity {capacity}", buffer.len()));
        }
        let ids: BTreeSet<u64> = buffer.iter().map(|e| e.sample_id).collect();
        if ids.len() != buffer.len() {
            return Err("duplicate exemplar".into());
        }
        for c in buffer.class_ids() {
            if buffer.class(c).iter().any(|e| e.class_id != c) {
                return Err(format!("class {c} holds foreign exemplars"));
            }
            if buffer.bin_counts(c).iter().sum::<usize>() != buffer.class_count(c) {
                return Err("bin counts do not sum to the class count".into());
            }
        }
        // classes with enough samples hold exactly their quota, so counts of
        // those classes differ by at most one
        let full: Vec<usize> = classes
            .iter()
            .filter(|c| available[c] >= quotas[c])
            .map(|&c| buffer.class_count(c))
            .collect();
        if let (Some(lo), Some(hi)) = (full.iter().min(), full.iter().max()) {
            if hi - lo > 1 {
                return Err(format!("per-class counts {full:?} differ by more than one"));
            }
        }
        for (&c, &q) in &quotas {
            if buffer.class_count(c) > q {
                return Err(format!("class {c} above its quota {q}"));
            }
        }
    }
    Ok(())
}

pub fn replay_strategy() -> impl Strategy<Value = (usize, usize, Vec<(usize, usize)>, u64)> {
    (
        1usize..80,
        1usize..9,
        prop::collection::vec((1usize..4, 0usize..60), 1..6),
        any::<u64>(),
    )
}

/// Per-bin counts of a selection from abundant uniform data.
pub fn abundant_bin_spread(slots: usize, bins: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = uniform_exemplars(&mut rng, 0, 0, 50 * slots.max(bins));
    let sel = select_exemplars(&samples, slots, bins, &mut rng).expect("selection");
    let mut counts = vec![0usize; bins];
    for e in &sel.exemplars {
        counts[e.azimuth_bin(bins)] += 1;
    }
    counts.iter().max().unwrap() - counts.iter().min().unwrap()
}
