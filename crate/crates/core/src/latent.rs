//! Fixed partition of the unit feature sphere into class regions.
//!
//! Class centroids form a simplex equiangular tight frame: `N` unit vectors
//! with pairwise inner product `-1/(N-1)`. A population of uniform sphere
//! samples is split by nearest centroid, and each new class draws its initial
//! vertex features from its own region.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vectors::{dot, VectorSet};

/// Simplex ETF centroids `E = sqrt(N/(N-1)) U (I - 11^T/N)`, where `U` is the
/// orthonormalized `dim x N` Gaussian draw for `seed`. Returned as `N` rows.
pub fn build_etf(max_classes: usize, dim: usize, seed: u64) -> Result<VectorSet> {
    if max_classes < 2 {
        return Err(Error::invalid("an ETF needs at least two classes"));
    }
    if dim < max_classes {
        return Err(Error::invalid(format!(
            "feature dimension {dim} is smaller than the class bound {max_classes}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::<f64>::from_fn(dim, max_classes, |_, _| rng.sample(StandardNormal));
    let u = g.qr().q();
    Ok(etf_from_basis(&u))
}

/// ETF columns for an explicit `dim x N` basis with orthonormal columns.
pub fn etf_from_basis(u: &DMatrix<f64>) -> VectorSet {
    let n = u.ncols();
    let nf = n as f64;
    let centering = DMatrix::<f64>::from_fn(n, n, |i, j| {
        if i == j {
            1.0 - 1.0 / nf
        } else {
            -1.0 / nf
        }
    });
    let e = u * centering * (nf / (nf - 1.0)).sqrt();
    let mut out = VectorSet::with_capacity(u.nrows(), n);
    for c in 0..n {
        let col: Vec<f64> = e.column(c).iter().copied().collect();
        out.push(&col);
    }
    out
}

/// `count` independent uniform draws from the unit sphere in `dim` dimensions.
pub fn sample_population(count: usize, dim: usize, seed: u64) -> Result<VectorSet> {
    if count == 0 {
        return Err(Error::invalid("population must be non-empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(VectorSet::random_unit(&mut rng, dim, count))
}

/// Index of the centroid with the largest inner product; ties go to the lowest index.
pub fn nearest_centroid(h: &[f64], centroids: &VectorSet) -> u32 {
    let mut best = 0;
    let mut best_s = f64::NEG_INFINITY;
    for (c, e) in centroids.rows().enumerate() {
        let s = dot(h, e);
        if s > best_s {
            best_s = s;
            best = c;
        }
    }
    best as u32
}

pub fn partition(population: &VectorSet, centroids: &VectorSet) -> Result<Vec<u32>> {
    if population.dim() != centroids.dim() {
        return Err(Error::invalid("population and centroid dimensions differ"));
    }
    Ok(population
        .rows()
        .map(|h| nearest_centroid(h, centroids))
        .collect())
}

/// Default population size: 16 per expected vertex per class, capped at 2^20.
pub fn default_population_size(expected_vertices: usize, max_classes: usize) -> usize {
    (16 * expected_vertices * max_classes).clamp(1, 1 << 20)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPartition {
    pub dim: usize,
    pub max_classes: usize,
    pub centroids: VectorSet,
    pub population: VectorSet,
    pub assignment: Vec<u32>,
    pub used_classes: BTreeSet<u32>,
}

impl LatentPartition {
    pub fn new(max_classes: usize, dim: usize, population_size: usize, seed: u64) -> Result<Self> {
        let centroids = build_etf(max_classes, dim, seed)?;
        let population = sample_population(population_size, dim, seed.wrapping_add(1))?;
        let assignment = partition(&population, &centroids)?;
        Ok(Self {
            dim,
            max_classes,
            centroids,
            population,
            assignment,
            used_classes: BTreeSet::new(),
        })
    }

    pub fn centroid(&self, class_id: u32) -> &[f64] {
        self.centroids.row(class_id as usize)
    }

    /// Population indices of class `class_id`'s region.
    pub fn members(&self, class_id: u32) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| (c == class_id).then_some(i))
            .collect()
    }

    /// Population indices belonging to classes that have not been allocated.
    pub fn unused_pool(&self) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(i, c)| (!self.used_classes.contains(c)).then_some(i))
            .collect()
    }

    /// A random subset of at most `size` vectors from the unused pool.
    pub fn sample_unused<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> VectorSet {
        let pool = self.unused_pool();
        let mut out = VectorSet::with_capacity(self.dim, size.min(pool.len()));
        if pool.is_empty() || size == 0 {
            return out;
        }
        for i in sample_indices(rng, pool.len(), size.min(pool.len())) {
            out.push(self.population.row(pool[i]));
        }
        out
    }

    /// Hands out `vertex_count` initial features for a new class, drawn from
    /// its region without replacement when the region is large enough and
    /// with replacement otherwise. Marks the class used.
    pub fn allocate_class(
        &mut self,
        class_id: u32,
        vertex_count: usize,
        seed: u64,
    ) -> Result<VectorSet> {
        if class_id as usize >= self.max_classes {
            return Err(Error::Allocation(format!(
                "class {class_id} exceeds the bound of {} classes",
                self.max_classes
            )));
        }
        if self.used_classes.contains(&class_id) {
            return Err(Error::AlreadyAllocated(class_id));
        }
        let members = self.members(class_id);
        if members.is_empty() {
            return Err(Error::Allocation(format!(
                "partition of class {class_id} is empty"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15 ^ class_id as u64));
        let picks: Vec<usize> = if members.len() >= vertex_count {
            sample_indices(&mut rng, members.len(), vertex_count).into_vec()
        } else {
            (0..vertex_count)
                .map(|_| rng.random_range(0..members.len()))
                .collect()
        };
        let mut out = VectorSet::with_capacity(self.dim, vertex_count);
        for i in picks {
            out.push(self.population.row(members[i]));
        }
        self.used_classes.insert(class_id);
        Ok(out)
    }
}
