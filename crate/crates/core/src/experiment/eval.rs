use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{rotation_error, Pose};
use crate::inference::{
    median, pose_accuracy, refine_pose, init_pose, self_render, PoseTemplates, Predictor,
    RefineSettings,
};
use crate::training::{Model, SampleLibrary};

/// Classification accuracy and confusion counts over a set of samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub samples: usize,
    pub accuracy: f64,
    /// `confusion[true][predicted]` counts.
    pub confusion: BTreeMap<u32, BTreeMap<u32, usize>>,
    pub per_class_accuracy: BTreeMap<u32, f64>,
    pub fallback_count: usize,
}

/// Classifies every listed sample with the model's stored classes.
pub fn evaluate_classification(
    model: &Model,
    library: &SampleLibrary,
    ids: &[u64],
) -> Result<ClassificationReport> {
    let predictor = Predictor::new(model, 1, 5.0)?;
    let results: Vec<(u32, u32, bool)> = ids
        .par_iter()
        .map(|id| {
            let s = library
                .get(id)
                .ok_or_else(|| Error::NotFound(format!("sample {id}")))?;
            let c = predictor.classify(&s.image)?;
            Ok((s.class_id, c.class_id, c.used_fallback))
        })
        .collect::<Result<_>>()?;
    let mut confusion: BTreeMap<u32, BTreeMap<u32, usize>> = BTreeMap::new();
    let mut correct = 0;
    let mut fallback_count = 0;
    for &(t, p, fb) in &results {
        *confusion.entry(t).or_default().entry(p).or_default() += 1;
        correct += usize::from(t == p);
        fallback_count += usize::from(fb);
    }
    let per_class_accuracy = confusion
        .iter()
        .map(|(&t, row)| {
            let total: usize = row.values().sum();
            (t, row.get(&t).copied().unwrap_or(0) as f64 / total as f64)
        })
        .collect();
    Ok(ClassificationReport {
        samples: results.len(),
        accuracy: if results.is_empty() {
            0.0
        } else {
            correct as f64 / results.len() as f64
        },
        confusion,
        per_class_accuracy,
        fallback_count,
    })
}

/// Pose accuracy at the given thresholds and the median rotation error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoseReport {
    pub samples: usize,
    pub thresholds: Vec<f64>,
    pub accuracy: Vec<f64>,
    pub median_error: f64,
    pub per_class_accuracy: BTreeMap<u32, Vec<f64>>,
    /// Cases where refinement ended above the initial loss (should be 0).
    pub loss_increases: usize,
}

fn summarize(
    rows: &[(u32, Pose, Pose, bool)],
    thresholds: &[f64],
) -> Result<PoseReport> {
    let est: Vec<Pose> = rows.iter().map(|r| r.1).collect();
    let gt: Vec<Pose> = rows.iter().map(|r| r.2).collect();
    let accuracy = thresholds
        .iter()
        .map(|&t| pose_accuracy(&est, &gt, t))
        .collect::<Result<_>>()?;
    let errors = est
        .iter()
        .zip(&gt)
        .map(|(e, g)| rotation_error(&e.rotation(), &g.rotation()))
        .collect::<Result<Vec<_>>>()?;
    let mut per_class_accuracy = BTreeMap::new();
    let classes: std::collections::BTreeSet<u32> = rows.iter().map(|r| r.0).collect();
    for c in classes {
        let (e, g): (Vec<Pose>, Vec<Pose>) =
            rows.iter().filter(|r| r.0 == c).map(|r| (r.1, r.2)).unzip();
        per_class_accuracy.insert(
            c,
            thresholds
                .iter()
                .map(|&t| pose_accuracy(&e, &g, t))
                .collect::<Result<_>>()?,
        );
    }
    Ok(PoseReport {
        samples: rows.len(),
        thresholds: thresholds.to_vec(),
        accuracy,
        median_error: median(&errors).unwrap_or(0.0),
        per_class_accuracy,
        loss_increases: rows.iter().filter(|r| r.3).count(),
    })
}

/// Pose estimation on images, assuming the true class is known.
pub fn evaluate_pose(
    model: &Model,
    library: &SampleLibrary,
    ids: &[u64],
    template_count: usize,
    thresholds: &[f64],
    settings: &RefineSettings,
) -> Result<PoseReport> {
    let distance = ids
        .first()
        .and_then(|id| library.get(id))
        .map_or(5.0, |s| s.pose.distance);
    let predictor = Predictor::new(model, template_count, distance)?;
    let rows: Vec<(u32, Pose, Pose, bool)> = ids
        .par_iter()
        .map(|id| {
            let s = library
                .get(id)
                .ok_or_else(|| Error::NotFound(format!("sample {id}")))?;
            let est = predictor.estimate_pose(&s.image, s.class_id, settings)?;
            Ok((s.class_id, est.pose, s.pose, est.loss > est.init_loss))
        })
        .collect::<Result<_>>()?;
    summarize(&rows, thresholds)
}

/// Pose recovery on noise-free feature maps rendered from the meshes
/// themselves, `per_class` random poses per stored class.
pub fn evaluate_self_render_pose(
    model: &Model,
    poses: &BTreeMap<u32, Vec<Pose>>,
    template_count: usize,
    thresholds: &[f64],
    settings: &RefineSettings,
) -> Result<PoseReport> {
    let camera = model.feature_camera();
    let jobs: Vec<(u32, Pose, u64)> = poses
        .iter()
        .flat_map(|(&c, ps)| {
            ps.iter()
                .enumerate()
                .map(move |(i, p)| (c, *p, (c as u64) << 32 | i as u64))
        })
        .collect();
    let distance = jobs.first().map_or(5.0, |j| j.1.distance);
    let templates: BTreeMap<u32, PoseTemplates> = poses
        .keys()
        .map(|&c| {
            Ok((
                c,
                PoseTemplates::new(model.meshes.get(c)?, &camera, template_count, distance)?,
            ))
        })
        .collect::<Result<_>>()?;
    let rows: Vec<(u32, Pose, Pose, bool)> = jobs
        .par_iter()
        .map(|&(c, pose, seed)| {
            let mesh = model.meshes.get(c)?;
            let map = self_render(mesh, &pose, &camera, model.bank.features(), seed)?;
            let field = crate::inference::class_scores(&map, &model.meshes, &model.bank)?;
            let fg = field.class_foreground(c)?;
            let (_, init) = init_pose(&map, &fg, mesh, &templates[&c])?;
            let est = refine_pose(&map, &fg, mesh, &camera, &init, settings)?;
            Ok((c, est.pose, pose, est.loss > est.init_loss))
        })
        .collect::<Result<_>>()?;
    summarize(&rows, thresholds)
}
