use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{gather_correspondences, BackgroundBank, Correspondences, NeuralMesh, TrainConfig};
use crate::error::{Error, Result};
use crate::geometry::RenderResult;
use crate::memory::MeshStore;
use crate::net::{FeatureExtractor, FeatureMap, FrozenExtractor, Image};
use crate::vectors::VectorSet;

/// Replaces `logits` by their softmax and returns their log-sum-exp.
/// Entries equal to negative infinity get probability zero.
pub fn softmax_in_place(logits: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        logits.iter_mut().for_each(|x| *x = 0.0);
        return f64::NEG_INFINITY;
    }
    let mut sum = 0.0;
    for x in logits.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    logits.iter_mut().for_each(|x| *x /= sum);
    max + sum.ln()
}

/// A loss summed over the visible vertices of one sample, with one gradient
/// row per visible vertex (with respect to its unit feature).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLoss {
    pub value: f64,
    pub grads: VectorSet,
}

impl FeatureLoss {
    fn zero(dim: usize, rows: usize) -> Self {
        Self {
            value: 0.0,
            grads: VectorSet::from_flat(dim, vec![0.0; rows * dim]),
        }
    }
}

/// Every vector a feature is contrasted against: all class meshes, then the
/// background bank, then the unused-pool sample.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub vectors: VectorSet,
    ranges: BTreeMap<u32, Range<usize>>,
}

impl CandidateSet {
    pub fn new(meshes: &MeshStore, bank: &VectorSet, unused: &VectorSet) -> Result<Self> {
        let dim = bank.dim();
        let mut vectors = VectorSet::new(dim);
        let mut ranges = BTreeMap::new();
        for m in meshes.iter() {
            if m.dim() != dim {
                return Err(Error::invalid("mesh and bank feature sizes differ"));
            }
            let start = vectors.len();
            vectors.extend(&m.theta);
            ranges.insert(m.class_id, start..vectors.len());
        }
        vectors.extend(bank);
        if !unused.is_empty() {
            if unused.dim() != dim {
                return Err(Error::invalid("unused-pool sample has the wrong feature size"));
            }
            vectors.extend(unused);
        }
        Ok(Self { vectors, ranges })
    }

    pub fn class_range(&self, class_id: u32) -> Option<Range<usize>> {
        self.ranges.get(&class_id).cloned()
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Vertex-contrastive loss against a prepared candidate set. For visible
/// vertex `k` the positive is its own feature; its neighbours are removed
/// from the denominator.
pub fn contrastive_loss(
    corr: &Correspondences,
    neighborhoods: &[Vec<u32>],
    candidates: &CandidateSet,
    kappa1: f64,
) -> Result<FeatureLoss> {
    let v = corr.visible_count();
    let dim = corr.features.dim();
    if v == 0 {
        return Ok(FeatureLoss::zero(dim, 0));
    }
    let own = candidates
        .class_range(corr.class_id)
        .ok_or_else(|| Error::NotFound(format!("mesh for class {}", corr.class_id)))?;
    if own.len() != neighborhoods.len() {
        return Err(Error::invalid("neighbourhoods do not match the class mesh"));
    }
    let n = candidates.len();
    let mut probs = Vec::new();
    candidates.vectors.similarities(corr.features.as_flat(), &mut probs);
    let mut value = 0.0;
    for (row, &k) in corr.vertices.iter().enumerate() {
        let logits = &mut probs[row * n..(row + 1) * n];
        logits.iter_mut().for_each(|x| *x *= kappa1);
        let positive = own.start + k as usize;
        let pos_logit = logits[positive];
        for &j in &neighborhoods[k as usize] {
            logits[own.start + j as usize] = f64::NEG_INFINITY;
        }
        value += softmax_in_place(logits) - pos_logit;
        logits[positive] -= 1.0;
    }
    let mut grads = candidates.vectors.weighted_sums(&probs);
    grads.as_flat_mut().iter_mut().for_each(|g| *g *= kappa1);
    Ok(FeatureLoss { value, grads })
}

/// Vertex-contrastive loss with negatives from every mesh, the background
/// bank and a sample of unused latent vectors.
pub fn loss_cont(
    corr: &Correspondences,
    meshes: &MeshStore,
    bank: &BackgroundBank,
    unused: &VectorSet,
    kappa1: f64,
) -> Result<FeatureLoss> {
    let mesh = meshes.get(corr.class_id)?;
    let candidates = CandidateSet::new(meshes, bank.features(), unused)?;
    contrastive_loss(corr, &mesh.neighborhoods, &candidates, kappa1)
}

/// Cross-entropy pulling each visible feature toward its class centroid.
pub fn loss_etf(
    corr: &Correspondences,
    centroids: &VectorSet,
    class_id: u32,
    kappa2: f64,
) -> Result<FeatureLoss> {
    let c = class_id as usize;
    if c >= centroids.len() {
        return Err(Error::invalid(format!(
            "class {class_id} has no centroid among {}",
            centroids.len()
        )));
    }
    let v = corr.visible_count();
    if v == 0 {
        return Ok(FeatureLoss::zero(centroids.dim(), 0));
    }
    let n = centroids.len();
    let mut probs = Vec::new();
    centroids.similarities(corr.features.as_flat(), &mut probs);
    let mut value = 0.0;
    for row in 0..v {
        let logits = &mut probs[row * n..(row + 1) * n];
        logits.iter_mut().for_each(|x| *x *= kappa2);
        let pos = logits[c];
        value += softmax_in_place(logits) - pos;
        logits[c] -= 1.0;
    }
    let mut grads = centroids.weighted_sums(&probs);
    grads.as_flat_mut().iter_mut().for_each(|g| *g *= kappa2);
    Ok(FeatureLoss { value, grads })
}

/// `KL(p(old) || p(new))` summed over rows, where `p(f)` is the softmax of
/// `kappa3 f.theta` over the previous meshes' features.
pub fn loss_kd(
    new: &VectorSet,
    old: &VectorSet,
    previous: &VectorSet,
    kappa3: f64,
) -> Result<FeatureLoss> {
    if new.len() != old.len() || new.dim() != old.dim() {
        return Err(Error::invalid("distillation needs old and new features on the same pixels"));
    }
    if previous.is_empty() || new.is_empty() {
        return Ok(FeatureLoss::zero(new.dim(), new.len()));
    }
    let m = previous.len();
    let mut p = Vec::new();
    let mut q = Vec::new();
    previous.similarities(new.as_flat(), &mut p);
    previous.similarities(old.as_flat(), &mut q);
    let mut value = 0.0;
    for row in 0..new.len() {
        let pr = &mut p[row * m..(row + 1) * m];
        let qr = &mut q[row * m..(row + 1) * m];
        pr.iter_mut().for_each(|x| *x *= kappa3);
        qr.iter_mut().for_each(|x| *x *= kappa3);
        // log p_j = a_j - lse_a; the difference of log-probabilities is
        // taken before exponentiation to stay accurate near zero
        let diff: Vec<f64> = qr.iter().zip(pr.iter()).map(|(a, b)| a - b).collect();
        let lse_new = softmax_in_place(pr);
        let lse_old = softmax_in_place(qr);
        let kl: f64 = qr
            .iter()
            .zip(&diff)
            .map(|(&t, &d)| t * (d - lse_old + lse_new))
            .sum();
        value += kl.max(0.0);
        for (a, &t) in pr.iter_mut().zip(qr.iter()) {
            *a -= t;
        }
    }
    let mut grads = previous.weighted_sums(&p);
    grads.as_flat_mut().iter_mut().for_each(|g| *g *= kappa3);
    Ok(FeatureLoss { value, grads })
}

/// Per-sample loss terms, each averaged over the visible vertices.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub l_cont: f64,
    pub l_etf: f64,
    pub l_kd: f64,
    pub total: f64,
}

impl LossParts {
    pub fn add(&mut self, other: &LossParts) {
        self.l_cont += other.l_cont;
        self.l_etf += other.l_etf;
        self.l_kd += other.l_kd;
        self.total += other.total;
    }

    pub fn scale(&mut self, s: f64) {
        self.l_cont *= s;
        self.l_etf *= s;
        self.l_kd *= s;
        self.total *= s;
    }

    pub fn is_finite(&self) -> bool {
        [self.l_cont, self.l_etf, self.l_kd, self.total]
            .iter()
            .all(|x| x.is_finite())
    }
}

/// Read-only state shared by all samples of one optimizer step.
pub struct LossContext<'a> {
    pub candidates: &'a CandidateSet,
    pub centroids: &'a VectorSet,
    /// Frozen extractor and vertex features from before the current task.
    pub teacher: Option<(&'a FrozenExtractor, &'a VectorSet)>,
    pub config: &'a TrainConfig,
}

/// Everything one sample contributes to a step.
pub struct SampleOutcome {
    pub parts: LossParts,
    pub param_grad: Vec<f64>,
    pub correspondences: Correspondences,
    pub map: FeatureMap,
}

/// Weighted sum of the contrastive, centroid and distillation terms for one
/// sample, with its gradient with respect to the extractor parameters.
pub fn combined_loss(
    extractor: &FeatureExtractor,
    image: &Image,
    render: &RenderResult,
    mesh: &NeuralMesh,
    ctx: &LossContext,
) -> Result<SampleOutcome> {
    let cfg = ctx.config;
    let (map, cache) = extractor.forward_with_cache(image)?;
    let corr = gather_correspondences(&map, render, mesh.class_id)?;
    let v = corr.visible_count();
    let dim = map.dim();
    if v == 0 {
        return Ok(SampleOutcome {
            parts: LossParts::default(),
            param_grad: vec![0.0; extractor.param_count()],
            correspondences: corr,
            map,
        });
    }
    let scale = 1.0 / v as f64;

    let cont = contrastive_loss(&corr, &mesh.neighborhoods, ctx.candidates, cfg.kappa1)?;
    let mut grad = cont.grads;
    let mut parts = LossParts {
        l_cont: cont.value * scale,
        ..LossParts::default()
    };

    if cfg.lambda_etf > 0.0 {
        let etf = loss_etf(&corr, ctx.centroids, mesh.class_id, cfg.kappa2)?;
        parts.l_etf = etf.value * scale;
        axpy(&mut grad, cfg.lambda_etf, &etf.grads);
    }
    if let (true, Some((teacher, previous))) = (cfg.lambda_kd > 0.0, ctx.teacher) {
        let old = corr.with_features_from(&teacher.forward(image)?)?;
        let kd = loss_kd(&corr.features, &old.features, previous, cfg.kappa3)?;
        parts.l_kd = kd.value * scale;
        axpy(&mut grad, cfg.lambda_kd, &kd.grads);
    }
    parts.total = parts.l_cont + cfg.lambda_etf * parts.l_etf + cfg.lambda_kd * parts.l_kd;

    let mut pixel_grad = VectorSet::from_flat(dim, vec![0.0; map.pixel_count() * dim]);
    for (row, &p) in corr.pixels.iter().enumerate() {
        let dst = pixel_grad.row_mut(p as usize);
        for (d, g) in dst.iter_mut().zip(grad.row(row)) {
            *d += g * scale;
        }
    }
    let param_grad = extractor.backward_cached(&map, &cache, &pixel_grad)?;
    Ok(SampleOutcome {
        parts,
        param_grad,
        correspondences: corr,
        map,
    })
}

fn axpy(acc: &mut VectorSet, a: f64, x: &VectorSet) {
    for (y, &xi) in acc.as_flat_mut().iter_mut().zip(x.as_flat()) {
        *y += a * xi;
    }
}
