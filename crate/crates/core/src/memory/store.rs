use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::training::NeuralMesh;
use crate::vectors::VectorSet;

/// Class meshes keyed by class id. Only grows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeshStore {
    meshes: BTreeMap<u32, NeuralMesh>,
}

impl MeshStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, mesh: NeuralMesh) -> Result<()> {
        if self.meshes.contains_key(&mesh.class_id) {
            return Err(Error::AlreadyAllocated(mesh.class_id));
        }
        self.meshes.insert(mesh.class_id, mesh);
        Ok(())
    }

    pub fn get(&self, class_id: u32) -> Result<&NeuralMesh> {
        self.meshes
            .get(&class_id)
            .ok_or_else(|| Error::NotFound(format!("mesh for class {class_id}")))
    }

    pub fn get_mut(&mut self, class_id: u32) -> Result<&mut NeuralMesh> {
        self.meshes
            .get_mut(&class_id)
            .ok_or_else(|| Error::NotFound(format!("mesh for class {class_id}")))
    }

    pub fn contains(&self, class_id: u32) -> bool {
        self.meshes.contains_key(&class_id)
    }

    pub fn len(&self) -> usize {
        self.meshes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meshes.is_empty()
    }

    pub fn class_ids(&self) -> Vec<u32> {
        self.meshes.keys().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &NeuralMesh> {
        self.meshes.values()
    }

    /// All vertex features of the given classes, concatenated in class order.
    pub fn stacked_features(&self, classes: &[u32]) -> Result<VectorSet> {
        let mut dim = None;
        let mut out: Option<VectorSet> = None;
        for &c in classes {
            let m = self.get(c)?;
            let set = out.get_or_insert_with(|| {
                dim = Some(m.theta.dim());
                VectorSet::new(m.theta.dim())
            });
            set.extend(&m.theta);
        }
        Ok(out.unwrap_or_else(|| VectorSet::new(dim.unwrap_or(1))))
    }
}
