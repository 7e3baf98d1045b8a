use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RenderResult;
use crate::net::FeatureMap;
use crate::vectors::VectorSet;

/// Fixed-size first-in-first-out store of background features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundBank {
    features: VectorSet,
    inserted_at: Vec<u64>,
    /// Global insertion counter per entry; breaks ties within one update.
    serial: Vec<u64>,
    clock: u64,
}

impl BackgroundBank {
    /// A bank filled with random unit vectors, all of age zero.
    pub fn new<R: Rng + ?Sized>(capacity: usize, dim: usize, rng: &mut R) -> Result<Self> {
        if capacity == 0 || dim == 0 {
            return Err(Error::invalid("bank capacity and dimension must be positive"));
        }
        Ok(Self {
            features: VectorSet::random_unit(rng, dim, capacity),
            inserted_at: vec![0; capacity],
            serial: (0..capacity as u64).collect(),
            clock: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.features.len()
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn features(&self) -> &VectorSet {
        &self.features
    }

    pub fn inserted_at(&self) -> &[u64] {
        &self.inserted_at
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn ages(&self) -> Vec<u64> {
        self.inserted_at.iter().map(|&t| self.clock - t).collect()
    }

    /// Slots in eviction order: first in, first out.
    pub fn eviction_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.capacity()).collect();
        order.sort_by_key(|&i| self.serial[i]);
        order
    }

    fn next_serial(&self) -> u64 {
        self.serial.iter().max().map_or(0, |m| m + 1)
    }

    /// Replaces the `new.len()` oldest entries with `new`. Returns the slots
    /// written, in the order of `new`.
    pub fn push_features(&mut self, new: &VectorSet) -> Result<Vec<usize>> {
        if new.dim() != self.dim() || new.len() > self.capacity() {
            return Err(Error::invalid(format!(
                "cannot insert {} features of dim {} into a bank of {} x {}",
                new.len(),
                new.dim(),
                self.capacity(),
                self.dim()
            )));
        }
        self.clock += 1;
        let first = self.next_serial();
        let slots: Vec<usize> = self.eviction_order().into_iter().take(new.len()).collect();
        for (row, &slot) in slots.iter().enumerate() {
            self.features.row_mut(slot).copy_from_slice(new.row(row));
            self.inserted_at[slot] = self.clock;
            self.serial[slot] = first + row as u64;
        }
        Ok(slots)
    }

    /// Samples `n_new` background pixels (object mask unset) uniformly and
    /// pushes their features. Returns `false` when the render has no
    /// background, in which case the bank is unchanged.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        map: &FeatureMap,
        render: &RenderResult,
        n_new: usize,
        rng: &mut R,
    ) -> Result<bool> {
        if n_new > self.capacity() {
            return Err(Error::invalid(format!(
                "cannot replace {n_new} entries of a bank holding {}",
                self.capacity()
            )));
        }
        if map.width != render.width || map.height != render.height {
            return Err(Error::invalid("render and feature map resolutions differ"));
        }
        let background: Vec<usize> = render
            .object_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| (!m).then_some(i))
            .collect();
        if background.is_empty() || n_new == 0 {
            return Ok(false);
        }
        let take = n_new.min(background.len());
        let mut new = VectorSet::with_capacity(self.dim(), take);
        for i in sample_indices(rng, background.len(), take) {
            new.push(map.at(background[i]));
        }
        self.push_features(&new)?;
        Ok(true)
    }

    /// Overwrites the whole bank; every entry becomes the youngest.
    pub fn replace_all(&mut self, features: VectorSet) -> Result<()> {
        if features.len() != self.capacity() || features.dim() != self.dim() {
            return Err(Error::invalid("replacement must match the bank's shape"));
        }
        self.clock += 1;
        let first = self.next_serial();
        self.features = features;
        self.inserted_at.iter_mut().for_each(|t| *t = self.clock);
        for (i, s) in self.serial.iter_mut().enumerate() {
            *s = first + i as u64;
        }
        Ok(())
    }
}
