use crate::error::{Error, Result};
use crate::memory::MeshStore;
use crate::net::FeatureMap;
use crate::training::BackgroundBank;
use crate::vectors::VectorSet;

/// Per-pixel best-match scores for every stored class and the background.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreField {
    pub width: usize,
    pub height: usize,
    /// Ascending class ids.
    pub class_ids: Vec<u32>,
    /// `scores[c * pixels + i]`: best vertex match of class `class_ids[c]` at pixel `i`.
    pub scores: Vec<f64>,
    pub background: Vec<f64>,
    /// Pixels where some class beats the background.
    pub foreground: Vec<bool>,
}

impl ScoreField {
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn class_score(&self, class_index: usize, pixel: usize) -> f64 {
        self.scores[class_index * self.pixel_count() + pixel]
    }

    /// Pixels where `class_id` beats the background.
    pub fn class_foreground(&self, class_id: u32) -> Result<Vec<bool>> {
        let c = self
            .class_ids
            .iter()
            .position(|&id| id == class_id)
            .ok_or_else(|| Error::NotFound(format!("class {class_id}")))?;
        Ok((0..self.pixel_count())
            .map(|i| self.class_score(c, i) > self.background[i])
            .collect())
    }
}

fn row_max(set: &VectorSet, queries: &VectorSet) -> Vec<f64> {
    let mut sims = Vec::new();
    set.similarities(queries.as_flat(), &mut sims);
    let n = set.len();
    sims.chunks_exact(n)
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

pub fn class_scores(map: &FeatureMap, meshes: &MeshStore, bank: &BackgroundBank) -> Result<ScoreField> {
    if meshes.is_empty() {
        return Err(Error::NoClasses);
    }
    let n = map.pixel_count();
    let class_ids = meshes.class_ids();
    let mut scores = Vec::with_capacity(class_ids.len() * n);
    for &c in &class_ids {
        scores.extend(row_max(&meshes.get(c)?.theta, &map.features));
    }
    let background = row_max(bank.features(), &map.features);
    let foreground = (0..n)
        .map(|i| (0..class_ids.len()).any(|c| scores[c * n + i] > background[i]))
        .collect();
    Ok(ScoreField {
        width: map.width,
        height: map.height,
        class_ids,
        scores,
        background,
        foreground,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub class_id: u32,
    pub score: f64,
    /// Confusion-adjusted score of every class, in class-id order.
    pub per_class: Vec<(u32, f64)>,
    /// Set when no pixel was foreground and all pixels were used instead.
    pub used_fallback: bool,
}

/// Predicts the class whose confusion-adjusted score
/// `max_i [s_y(i) - (1 - (top1(i) - top2(i)))]` over foreground pixels is
/// highest. With one class the runner-up score is taken as -1.
pub fn classify(field: &ScoreField) -> Result<Classification> {
    let n = field.pixel_count();
    let k = field.class_ids.len();
    if k == 0 {
        return Err(Error::NoClasses);
    }
    let used_fallback = !field.foreground.iter().any(|&f| f);
    let mut best = vec![f64::NEG_INFINITY; k];
    for i in 0..n {
        if !used_fallback && !field.foreground[i] {
            continue;
        }
        let (mut top1, mut top2) = (f64::NEG_INFINITY, -1.0f64);
        for c in 0..k {
            let s = field.class_score(c, i);
            if s > top1 {
                top2 = top1.max(-1.0);
                top1 = s;
            } else if s > top2 {
                top2 = s;
            }
        }
        if k == 1 {
            top2 = -1.0;
        }
        let penalty = 1.0 - (top1 - top2);
        for (c, b) in best.iter_mut().enumerate() {
            *b = b.max(field.class_score(c, i) - penalty);
        }
    }
    let mut arg = 0;
    for c in 1..k {
        if best[c] > best[arg] {
            arg = c;
        }
    }
    Ok(Classification {
        class_id: field.class_ids[arg],
        score: best[arg],
        per_class: field.class_ids.iter().copied().zip(best).collect(),
        used_fallback,
    })
}
