use serde::{Deserialize, Serialize};

use super::Correspondences;
use crate::error::{Error, Result};
use crate::geometry::{vertex_neighborhoods, CuboidMesh};
use crate::vectors::{normalize, VectorSet};

/// A class cuboid with one unit feature per vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralMesh {
    pub class_id: u32,
    pub geometry: CuboidMesh,
    pub theta: VectorSet,
    /// Vertices excluded as negatives for each vertex.
    pub neighborhoods: Vec<Vec<u32>>,
}

impl NeuralMesh {
    /// `radius` is in object units.
    pub fn new(class_id: u32, geometry: CuboidMesh, theta: VectorSet, radius: f64) -> Result<Self> {
        if theta.len() != geometry.vertex_count() {
            return Err(Error::invalid(format!(
                "{} features for {} vertices",
                theta.len(),
                geometry.vertex_count()
            )));
        }
        if theta.max_norm_error() > 1e-9 {
            return Err(Error::invalid("vertex features must be unit vectors"));
        }
        let neighborhoods = vertex_neighborhoods(&geometry, radius)?;
        Ok(Self {
            class_id,
            geometry,
            theta,
            neighborhoods,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.theta.len()
    }

    pub fn dim(&self) -> usize {
        self.theta.dim()
    }
}

/// Moves each visible vertex feature toward its observed feature,
/// `theta <- (1 - eta) f + eta theta`, and renormalizes. Invisible vertices
/// are left untouched.
pub fn momentum_update(mesh: &mut NeuralMesh, corr: &Correspondences, eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::invalid(format!("eta must lie in [0, 1], got {eta}")));
    }
    if corr.class_id != mesh.class_id || corr.vertex_count() != mesh.vertex_count() {
        return Err(Error::invalid("correspondences do not belong to this mesh"));
    }
    let mut buf = vec![0.0; mesh.dim()];
    for (row, &k) in corr.vertices.iter().enumerate() {
        let f = corr.features.row(row);
        let theta = mesh.theta.row_mut(k as usize);
        for ((b, &fi), &ti) in buf.iter_mut().zip(f).zip(theta.iter()) {
            *b = (1.0 - eta) * fi + eta * ti;
        }
        // an exact antipodal cancellation leaves nothing to normalize
        if normalize(&mut buf) > 1e-12 {
            theta.copy_from_slice(&buf);
        }
    }
    Ok(())
}
