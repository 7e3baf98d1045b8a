use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;

/// A stored training sample reference. Features are recomputed on replay
/// because the extractor keeps changing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub sample_id: u64,
    pub class_id: u32,
    pub pose: Pose,
}

impl Exemplar {
    pub fn azimuth_bin(&self, bins: usize) -> usize {
        azimuth_bin(self.pose.azimuth, bins)
    }
}

fn azimuth_bin(azimuth: f64, bins: usize) -> usize {
    let a = azimuth.rem_euclid(TAU);
    ((a / TAU * bins as f64).floor() as usize).min(bins - 1)
}

/// Result of exemplar selection; `short` is set when fewer than the requested
/// number of samples were available.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub exemplars: Vec<Exemplar>,
    pub short: bool,
}

/// Picks `slots` exemplars spread evenly over `bins` azimuth bins.
///
/// Each bin contributes `slots / bins` random samples. A bin that cannot fill
/// its share is merged with its right neighbour (wrapping) and the pair fills
/// the combined share. Remaining slots are filled with further random
/// samples, at most one per group per round.
pub fn select_exemplars<R: Rng + ?Sized>(
    samples: &[Exemplar],
    slots: usize,
    bins: usize,
    rng: &mut R,
) -> Result<Selection> {
    if slots == 0 || bins == 0 {
        return Err(Error::invalid("slots and bins must be positive"));
    }
    if samples.len() <= slots {
        return Ok(Selection {
            exemplars: samples.to_vec(),
            short: samples.len() < slots,
        });
    }

    let per_bin = slots / bins;
    // Each group: (members as sample indices, quota)
    let mut groups: Vec<(Vec<usize>, usize)> = (0..bins).map(|_| (Vec::new(), per_bin)).collect();
    for (i, s) in samples.iter().enumerate() {
        groups[s.azimuth_bin(bins)].0.push(i);
    }
    while groups.len() > 1 {
        let Some(g) = groups.iter().position(|(m, q)| m.len() < *q) else {
            break;
        };
        let right = (g + 1) % groups.len();
        let (members, quota) = groups[right].clone();
        groups[g].0.extend(members);
        groups[g].1 += quota;
        groups.remove(right);
    }

    let mut picked = Vec::with_capacity(slots);
    let mut next = Vec::with_capacity(groups.len());
    for (members, quota) in &mut groups {
        members.sort_unstable();
        members.shuffle(rng);
        let take = (*quota).min(members.len());
        picked.extend_from_slice(&members[..take]);
        next.push(take);
    }
    // leftover slots: one more random sample per group per round, groups in
    // random order, so bins stay within one sample of each other
    while picked.len() < slots {
        let mut order: Vec<usize> = (0..groups.len()).filter(|&g| next[g] < groups[g].0.len()).collect();
        order.shuffle(rng);
        for g in order {
            if picked.len() == slots {
                break;
            }
            picked.push(groups[g].0[next[g]]);
            next[g] += 1;
        }
    }
    Ok(Selection {
        exemplars: picked.into_iter().map(|i| samples[i]).collect(),
        short: false,
    })
}

/// Splits `capacity` slots over `classes` (ascending ids); the remainder goes
/// to the lowest ids.
pub fn class_quotas(capacity: usize, classes: &[u32]) -> BTreeMap<u32, usize> {
    let mut ids = classes.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.is_empty() {
        return BTreeMap::new();
    }
    let base = capacity / ids.len();
    let rem = capacity % ids.len();
    ids.into_iter()
        .enumerate()
        .map(|(r, c)| (c, base + usize::from(r < rem)))
        .collect()
}

/// Fixed-capacity exemplar memory, balanced across classes and azimuth bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    pub capacity: usize,
    pub bins: usize,
    classes: BTreeMap<u32, Vec<Exemplar>>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::invalid("replay buffer needs at least one azimuth bin"));
        }
        Ok(Self {
            capacity,
            bins,
            classes: BTreeMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.classes.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn class_ids(&self) -> Vec<u32> {
        self.classes
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(c, _)| *c)
            .collect()
    }

    pub fn class(&self, class_id: u32) -> &[Exemplar] {
        self.classes.get(&class_id).map_or(&[], Vec::as_slice)
    }

    pub fn class_count(&self, class_id: u32) -> usize {
        self.class(class_id).len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Exemplar> {
        self.classes.values().flatten()
    }

    pub fn bin_counts(&self, class_id: u32) -> Vec<usize> {
        let mut counts = vec![0; self.bins];
        for e in self.class(class_id) {
            counts[e.azimuth_bin(self.bins)] += 1;
        }
        counts
    }

    /// Stores a class's exemplars, replacing any previous set. Fails if the
    /// buffer would exceed its capacity.
    pub fn insert_class(&mut self, class_id: u32, exemplars: Vec<Exemplar>) -> Result<()> {
        let others = self.len() - self.class_count(class_id);
        if others + exemplars.len() > self.capacity {
            return Err(Error::invalid(format!(
                "replay buffer over capacity: {} + {} > {}",
                others,
                exemplars.len(),
                self.capacity
            )));
        }
        self.classes.insert(class_id, exemplars);
        Ok(())
    }

    /// Shrinks one class to `new_count`, always removing from the fullest bin
    /// (lowest bin on ties) and picking the victim at random within it.
    pub fn reduce_class<R: Rng + ?Sized>(
        &mut self,
        class_id: u32,
        new_count: usize,
        rng: &mut R,
    ) -> Result<()> {
        let bins = self.bins;
        let Some(list) = self.classes.get_mut(&class_id) else {
            return if new_count == 0 {
                Ok(())
            } else {
                Err(Error::NotFound(format!("replay class {class_id}")))
            };
        };
        if new_count > list.len() {
            return Err(Error::invalid(format!(
                "cannot grow class {class_id} from {} to {new_count} by reduction",
                list.len()
            )));
        }
        let mut by_bin: Vec<Vec<Exemplar>> = vec![Vec::new(); bins];
        for e in list.drain(..) {
            by_bin[e.azimuth_bin(bins)].push(e);
        }
        let mut total: usize = by_bin.iter().map(Vec::len).sum();
        while total > new_count {
            let (b, _) = by_bin
                .iter()
                .enumerate()
                .max_by(|(ia, a), (ib, b)| a.len().cmp(&b.len()).then(ib.cmp(ia)))
                .expect("at least one bin");
            let victim = rng.random_range(0..by_bin[b].len());
            by_bin[b].remove(victim);
            total -= 1;
        }
        list.extend(by_bin.into_iter().flatten());
        Ok(())
    }

    /// Reduces every stored class to its share of the capacity when it is
    /// divided over `classes` (which may include classes not stored yet).
    /// Returns the per-class quotas.
    pub fn rebalance<R: Rng + ?Sized>(
        &mut self,
        classes: &[u32],
        rng: &mut R,
    ) -> Result<BTreeMap<u32, usize>> {
        if classes.is_empty() {
            return Err(Error::invalid("rebalance needs at least one class"));
        }
        let quotas = class_quotas(self.capacity, classes);
        let stored: Vec<u32> = self.classes.keys().copied().collect();
        for c in stored {
            let q = quotas.get(&c).copied().unwrap_or(0);
            if self.class_count(c) > q {
                self.reduce_class(c, q, rng)?;
            }
        }
        Ok(quotas)
    }

    /// Per-exemplar manifest rows: `(sample id, class, azimuth bin)`.
    pub fn manifest(&self) -> Vec<(u64, u32, usize)> {
        self.iter()
            .map(|e| (e.sample_id, e.class_id, e.azimuth_bin(self.bins)))
            .collect()
    }
}
