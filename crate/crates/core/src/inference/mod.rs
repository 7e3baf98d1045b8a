//! Classification by vertex matching, pose estimation by template matching
//! plus render-and-compare, and evaluation metrics.

mod metrics;
mod pose;
mod scores;

pub use metrics::{mean_task_accuracy, median, pose_accuracy};
pub use pose::{
    init_pose, reconstruction_loss, refine_pose, self_render, PoseEstimate, PoseTemplates,
    RefineSettings,
};
pub use scores::{class_scores, classify, Classification, ScoreField};

use crate::error::Result;
use crate::net::Image;
use crate::training::Model;

/// Read-only inference over a trained model with cached pose templates.
pub struct Predictor<'a> {
    pub model: &'a Model,
    templates: std::collections::BTreeMap<u32, PoseTemplates>,
}

impl<'a> Predictor<'a> {
    /// `template_count` grid poses at `distance` are pre-rendered per class.
    pub fn new(model: &'a Model, template_count: usize, distance: f64) -> Result<Self> {
        use rayon::prelude::*;
        let camera = model.feature_camera();
        let templates = model
            .meshes
            .class_ids()
            .par_iter()
            .map(|&c| {
                let mesh = model.meshes.get(c)?;
                Ok((c, PoseTemplates::new(mesh, &camera, template_count, distance)?))
            })
            .collect::<Result<_>>()?;
        Ok(Self { model, templates })
    }

    pub fn scores(&self, image: &Image) -> Result<ScoreField> {
        let map = self.model.extractor.forward(image)?;
        class_scores(&map, &self.model.meshes, &self.model.bank)
    }

    pub fn classify(&self, image: &Image) -> Result<Classification> {
        classify(&self.scores(image)?)
    }

    /// Pose of the object assuming it belongs to `class_id`.
    pub fn estimate_pose(
        &self,
        image: &Image,
        class_id: u32,
        settings: &RefineSettings,
    ) -> Result<PoseEstimate> {
        let map = self.model.extractor.forward(image)?;
        self.estimate_pose_from_map(&map, class_id, settings)
    }

    pub fn estimate_pose_from_map(
        &self,
        map: &crate::net::FeatureMap,
        class_id: u32,
        settings: &RefineSettings,
    ) -> Result<PoseEstimate> {
        let field = class_scores(map, &self.model.meshes, &self.model.bank)?;
        let foreground = field.class_foreground(class_id)?;
        let mesh = self.model.meshes.get(class_id)?;
        let templates = self
            .templates
            .get(&class_id)
            .ok_or_else(|| crate::Error::NotFound(format!("templates for class {class_id}")))?;
        let (index, init) = init_pose(map, &foreground, mesh, templates)?;
        let mut est = refine_pose(
            map,
            &foreground,
            mesh,
            &self.model.feature_camera(),
            &init,
            settings,
        )?;
        est.template_index = Some(index);
        Ok(est)
    }
}
