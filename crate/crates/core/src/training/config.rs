use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the model: feature size, class bound, image size and memory budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub feature_dim: usize,
    /// Channel counts of the two hidden convolution layers.
    pub hidden_widths: [usize; 2],
    pub max_classes: usize,
    pub image_width: usize,
    pub image_height: usize,
    /// Approximate vertex count of each class cuboid.
    pub mesh_vertices: usize,
    /// Size of the sampled latent population; 0 picks a default from the
    /// vertex count and class bound.
    pub population_size: usize,
    pub bank_size: usize,
    pub replay_capacity: usize,
    pub azimuth_bins: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            feature_dim: 32,
            hidden_widths: [16, 32],
            max_classes: 8,
            image_width: 64,
            image_height: 64,
            mesh_vertices: 200,
            population_size: 0,
            bank_size: 256,
            replay_capacity: 240,
            azimuth_bins: 8,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("feature_dim", self.feature_dim),
            ("hidden_widths[0]", self.hidden_widths[0]),
            ("hidden_widths[1]", self.hidden_widths[1]),
            ("max_classes", self.max_classes),
            ("mesh_vertices", self.mesh_vertices),
            ("bank_size", self.bank_size),
            ("azimuth_bins", self.azimuth_bins),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.max_classes < 2 {
            return Err(Error::invalid("max_classes must be at least 2"));
        }
        if self.feature_dim < self.max_classes {
            return Err(Error::invalid(format!(
                "feature_dim {} cannot hold {} equiangular centroids",
                self.feature_dim, self.max_classes
            )));
        }
        if self.image_width < 8 || self.image_height < 8 {
            return Err(Error::invalid("images must be at least 8x8"));
        }
        Ok(())
    }
}

/// Loss weights, concentrations and optimization schedule for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    pub lambda_etf: f64,
    pub lambda_kd: f64,
    pub eta: f64,
    pub epochs_per_task: usize,
    pub lr: f64,
    /// Halve the learning rate every this many epochs; 0 keeps it constant.
    pub lr_halve_every: usize,
    pub batch_size: usize,
    /// Neighbourhood radius as a fraction of the cuboid diagonal.
    pub neighborhood_radius: f64,
    pub bg_update_count: usize,
    pub unused_sample_size: usize,
    pub replay: bool,
    pub momentum_on_replay: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            kappa1: 1.0 / 0.07,
            kappa2: 1.0,
            kappa3: 0.5,
            lambda_etf: 0.2,
            lambda_kd: 2.0,
            eta: 0.9,
            epochs_per_task: 10,
            lr: 2e-3,
            lr_halve_every: 4,
            batch_size: 16,
            neighborhood_radius: 0.2,
            bg_update_count: 5,
            unused_sample_size: 512,
            replay: true,
            momentum_on_replay: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// The alternative loss weighting (0.1, 10.0).
    pub fn heavy_distillation() -> Self {
        Self {
            lambda_etf: 0.1,
            lambda_kd: 10.0,
            ..Self::default()
        }
    }

    /// Plain fine-tuning: no replay, no distillation, no centroid loss.
    pub fn finetune() -> Self {
        Self {
            lambda_etf: 0.0,
            lambda_kd: 0.0,
            replay: false,
            ..Self::default()
        }
    }

    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        match self.lr_halve_every {
            0 => self.lr,
            n => self.lr * 0.5f64.powi((epoch / n) as i32),
        }
    }

    /// Checks ranges and returns warnings for legal but unusual settings.
    pub fn validate(&self) -> Result<Vec<String>> {
        for (name, v) in [
            ("kappa1", self.kappa1),
            ("kappa2", self.kappa2),
            ("kappa3", self.kappa3),
            ("lr", self.lr),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("lambda_etf", self.lambda_etf), ("lambda_kd", self.lambda_kd)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::invalid(format!("eta must lie in [0, 1], got {}", self.eta)));
        }
        if !(self.neighborhood_radius >= 0.0) {
            return Err(Error::invalid("neighborhood_radius must be non-negative"));
        }
        if self.batch_size == 0 || self.epochs_per_task == 0 {
            return Err(Error::invalid("batch_size and epochs_per_task must be positive"));
        }
        let mut warnings = Vec::new();
        if self.kappa3 >= 1.0 {
            warnings.push(format!(
                "kappa3 = {} sharpens the distillation targets; values below 1 are recommended",
                self.kappa3
            ));
        }
        Ok(warnings)
    }
}
