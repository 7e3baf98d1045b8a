//! Row-major storage for sets of equal-length feature vectors.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Scales `a` to unit length in place. Returns the original norm.
pub fn normalize(a: &mut [f64]) -> f64 {
    let n = norm(a);
    if n > 0.0 {
        a.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Draws one vector uniformly from the unit sphere in `dim` dimensions.
pub fn random_unit<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if normalize(&mut v) > 1e-12 {
            return v;
        }
    }
}

/// A dense `len x dim` matrix whose rows are feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorSet {
    dim: usize,
    data: Vec<f64>,
}

impl VectorSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, rows: usize) -> Self {
        Self {
            dim,
            data: Vec::with_capacity(dim * rows),
        }
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Self {
        assert!(dim > 0 && data.len().is_multiple_of(dim), "flat data does not tile dim");
        Self { dim, data }
    }

    pub fn from_rows<I, R>(dim: usize, rows: I) -> Self
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[f64]>,
    {
        let mut set = Self::new(dim);
        for r in rows {
            set.push(r.as_ref());
        }
        set
    }

    pub fn random_unit<R: Rng + ?Sized>(rng: &mut R, dim: usize, rows: usize) -> Self {
        let mut set = Self::with_capacity(dim, rows);
        for _ in 0..rows {
            set.push(&random_unit(rng, dim));
        }
        set
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / self.dim.max(1)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn push(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.dim, "vector dimension mismatch");
        self.data.extend_from_slice(v);
    }

    pub fn extend(&mut self, other: &VectorSet) {
        assert_eq!(other.dim, self.dim, "vector dimension mismatch");
        self.data.extend_from_slice(&other.data);
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Largest deviation of any row norm from one.
    pub fn max_norm_error(&self) -> f64 {
        self.rows()
            .map(|r| (norm(r) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `out[i * len + j] = query_i . row_j` for a row-major block of queries.
    pub fn similarities(&self, queries: &[f64], out: &mut Vec<f64>) {
        let nq = queries.len() / self.dim;
        let n = self.len();
        out.clear();
        out.resize(nq * n, 0.0);
        if nq == 0 || n == 0 {
            return;
        }
        // SAFETY: slices are sized exactly for the (nq x dim) * (dim x n) product.
        unsafe {
            matrixmultiply::dgemm(
                nq,
                self.dim,
                n,
                1.0,
                queries.as_ptr(),
                self.dim as isize,
                1,
                self.data.as_ptr(),
                1,
                self.dim as isize,
                0.0,
                out.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }

    /// Row `i` of the result is `sum_j weights[i * len + j] * row_j`.
    pub fn weighted_sums(&self, weights: &[f64]) -> VectorSet {
        let n = self.len();
        let nq = weights.len().checked_div(n).unwrap_or(0);
        let mut out = VectorSet::from_flat(self.dim, vec![0.0; nq * self.dim]);
        if nq == 0 {
            return out;
        }
        // SAFETY: (nq x n) * (n x dim) into an nq x dim buffer.
        unsafe {
            matrixmultiply::dgemm(
                nq,
                n,
                self.dim,
                1.0,
                weights.as_ptr(),
                n as isize,
                1,
                self.data.as_ptr(),
                self.dim as isize,
                1,
                0.0,
                out.data.as_mut_ptr(),
                self.dim as isize,
                1,
            );
        }
        out
    }
}
