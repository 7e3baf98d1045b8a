use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bench::OcclusionLevel;
use crate::error::{Error, Result};
use crate::inference::RefineSettings;
use crate::training::{ModelConfig, TrainConfig};

/// Every knob of a run. Serialized as flat `key=value` lines; see
/// [`ExperimentConfig::KEYS`] for the accepted keys.
///
/// `max_classes`, `image_width` and `image_height` may be 0, meaning "take
/// it from the dataset".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: Option<PathBuf>,
    pub split: String,
    pub split_seed: u64,
    /// Levels evaluated by `eval`; `None` is the unoccluded test set.
    pub eval_occlusion: Vec<Option<OcclusionLevel>>,
    pub template_count: usize,
    /// Pose accuracy thresholds in radians.
    pub thresholds: Vec<f64>,
    pub refine_iterations: usize,
    pub refine_lr: f64,
    pub refine_fd_step: f64,
    /// Random poses per class for the self-rendered pose evaluation.
    pub self_render_per_class: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let refine = RefineSettings::default();
        Self {
            model: ModelConfig {
                max_classes: 0,
                image_width: 0,
                image_height: 0,
                ..ModelConfig::default()
            },
            train: TrainConfig::default(),
            data: None,
            split: "B0+2".into(),
            split_seed: 1,
            eval_occlusion: vec![
                None,
                Some(OcclusionLevel::L1),
                Some(OcclusionLevel::L2),
                Some(OcclusionLevel::L3),
            ],
            template_count: 144,
            thresholds: vec![PI / 6.0, PI / 18.0],
            refine_iterations: refine.iterations,
            refine_lr: refine.lr,
            refine_fd_step: refine.fd_step,
            self_render_per_class: 50,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("bad value {value:?} for key {key}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn level_name(l: &Option<OcclusionLevel>) -> String {
    l.map_or_else(|| "none".to_string(), |l| l.to_string())
}

impl ExperimentConfig {
    pub const KEYS: &'static [&'static str] = &[
        "data",
        "split",
        "split_seed",
        "seed",
        "model_seed",
        "feature_dim",
        "hidden_widths",
        "max_classes",
        "image_width",
        "image_height",
        "mesh_vertices",
        "population_size",
        "bank_size",
        "replay_capacity",
        "azimuth_bins",
        "kappa1",
        "kappa2",
        "kappa3",
        "lambda_etf",
        "lambda_kd",
        "eta",
        "epochs",
        "lr",
        "lr_halve_every",
        "batch_size",
        "neighborhood_radius",
        "bg_update_count",
        "unused_sample_size",
        "replay",
        "momentum_on_replay",
        "eval_occlusion",
        "template_count",
        "thresholds",
        "refine_iterations",
        "refine_lr",
        "refine_fd_step",
        "self_render_per_class",
    ];

    /// Sets one key. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        let t = &mut self.train;
        match key {
            "data" => {
                let v = value.trim();
                self.data = (!v.is_empty()).then(|| PathBuf::from(v));
            }
            "split" => self.split = value.trim().to_string(),
            "split_seed" => self.split_seed = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "model_seed" => m.seed = parse(key, value)?,
            "feature_dim" => m.feature_dim = parse(key, value)?,
            "hidden_widths" => {
                let w: Vec<usize> = parse_list(key, value)?;
                m.hidden_widths = w
                    .try_into()
                    .map_err(|_| Error::invalid("hidden_widths takes two values"))?;
            }
            "max_classes" => m.max_classes = parse(key, value)?,
            "image_width" => m.image_width = parse(key, value)?,
            "image_height" => m.image_height = parse(key, value)?,
            "mesh_vertices" => m.mesh_vertices = parse(key, value)?,
            "population_size" => m.population_size = parse(key, value)?,
            "bank_size" => m.bank_size = parse(key, value)?,
            "replay_capacity" => m.replay_capacity = parse(key, value)?,
            "azimuth_bins" => m.azimuth_bins = parse(key, value)?,
            "kappa1" => t.kappa1 = parse(key, value)?,
            "kappa2" => t.kappa2 = parse(key, value)?,
            "kappa3" => t.kappa3 = parse(key, value)?,
            "lambda_etf" => t.lambda_etf = parse(key, value)?,
            "lambda_kd" => t.lambda_kd = parse(key, value)?,
            "eta" => t.eta = parse(key, value)?,
            "epochs" => t.epochs_per_task = parse(key, value)?,
            "lr" => t.lr = parse(key, value)?,
            "lr_halve_every" => t.lr_halve_every = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "neighborhood_radius" => t.neighborhood_radius = parse(key, value)?,
            "bg_update_count" => t.bg_update_count = parse(key, value)?,
            "unused_sample_size" => t.unused_sample_size = parse(key, value)?,
            "replay" => t.replay = parse(key, value)?,
            "momentum_on_replay" => t.momentum_on_replay = parse(key, value)?,
            "eval_occlusion" => {
                self.eval_occlusion = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| match s.trim() {
                        "none" => Ok(None),
                        s => s.parse().map(Some),
                    })
                    .collect::<Result<_>>()?
            }
            "template_count" => self.template_count = parse(key, value)?,
            "thresholds" => self.thresholds = parse_list(key, value)?,
            "refine_iterations" => self.refine_iterations = parse(key, value)?,
            "refine_lr" => self.refine_lr = parse(key, value)?,
            "refine_fd_step" => self.refine_fd_step = parse(key, value)?,
            "self_render_per_class" => self.self_render_per_class = parse(key, value)?,
            _ => return Err(Error::invalid(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` text on top of `self`. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("line {}: expected key=value", n + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn get(&self, key: &str) -> Result<String> {
        let m = &self.model;
        let t = &self.train;
        Ok(match key {
            "data" => self
                .data
                .as_ref()
                .map_or_else(String::new, |p| p.display().to_string()),
            "split" => self.split.clone(),
            "split_seed" => self.split_seed.to_string(),
            "seed" => t.seed.to_string(),
            "model_seed" => m.seed.to_string(),
            "feature_dim" => m.feature_dim.to_string(),
            "hidden_widths" => join(&m.hidden_widths),
            "max_classes" => m.max_classes.to_string(),
            "image_width" => m.image_width.to_string(),
            "image_height" => m.image_height.to_string(),
            "mesh_vertices" => m.mesh_vertices.to_string(),
            "population_size" => m.population_size.to_string(),
            "bank_size" => m.bank_size.to_string(),
            "replay_capacity" => m.replay_capacity.to_string(),
            "azimuth_bins" => m.azimuth_bins.to_string(),
            "kappa1" => t.kappa1.to_string(),
            "kappa2" => t.kappa2.to_string(),
            "kappa3" => t.kappa3.to_string(),
            "lambda_etf" => t.lambda_etf.to_string(),
            "lambda_kd" => t.lambda_kd.to_string(),
            "eta" => t.eta.to_string(),
            "epochs" => t.epochs_per_task.to_string(),
            "lr" => t.lr.to_string(),
            "lr_halve_every" => t.lr_halve_every.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "neighborhood_radius" => t.neighborhood_radius.to_string(),
            "bg_update_count" => t.bg_update_count.to_string(),
            "unused_sample_size" => t.unused_sample_size.to_string(),
            "replay" => t.replay.to_string(),
            "momentum_on_replay" => t.momentum_on_replay.to_string(),
            "eval_occlusion" => self
                .eval_occlusion
                .iter()
                .map(level_name)
                .collect::<Vec<_>>()
                .join(","),
            "template_count" => self.template_count.to_string(),
            "thresholds" => join(&self.thresholds),
            "refine_iterations" => self.refine_iterations.to_string(),
            "refine_lr" => self.refine_lr.to_string(),
            "refine_fd_step" => self.refine_fd_step.to_string(),
            "self_render_per_class" => self.self_render_per_class.to_string(),
            _ => return Err(Error::invalid(format!("unknown config key {key:?}"))),
        })
    }

    /// All keys in [`Self::KEYS`] order; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in Self::KEYS {
            // every listed key is known to `get`
            let _ = writeln!(out, "{k}={}", self.get(k).unwrap_or_default());
        }
        out
    }

    pub fn entries(&self) -> Vec<(String, String)> {
        Self::KEYS
            .iter()
            .map(|k| (k.to_string(), self.get(k).unwrap_or_default()))
            .collect()
    }

    pub fn refine_settings(&self) -> RefineSettings {
        RefineSettings {
            iterations: self.refine_iterations,
            lr: self.refine_lr,
            fd_step: self.refine_fd_step,
            ..RefineSettings::default()
        }
    }

    /// The model configuration with dataset-derived fields filled in.
    pub fn resolved_model(&self, classes: usize, width: usize, height: usize) -> ModelConfig {
        let mut m = self.model.clone();
        if m.max_classes == 0 {
            m.max_classes = classes.max(2);
        }
        if m.image_width == 0 {
            m.image_width = width;
        }
        if m.image_height == 0 {
            m.image_height = height;
        }
        m
    }

    /// Checks everything that does not depend on the dataset; the split is
    /// checked when it is applied. Returns training warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        self.resolved_model(8, 64, 64).validate()?;
        let warnings = self.train.validate()?;
        if self.template_count == 0 {
            return Err(Error::invalid("template_count must be positive"));
        }
        if self.thresholds.is_empty() || self.thresholds.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::invalid("thresholds must be positive radians"));
        }
        if !(self.refine_lr > 0.0) || !(self.refine_fd_step > 0.0) {
            return Err(Error::invalid("refinement lr and fd step must be positive"));
        }
        Ok(warnings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_exact() {
        let mut c = ExperimentConfig::default();
        c.set("lr", "0.0012345678901234").unwrap();
        c.set("eval_occlusion", "none,l3").unwrap();
        c.set("hidden_widths", "8,12").unwrap();
        c.set("data", "some/dir").unwrap();
        let back = ExperimentConfig::from_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        let d = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_text(&d.to_text()).unwrap(), d);
        assert_eq!(back.to_text(), c.to_text());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_text("learning_rate=0.1").is_err());
        assert!(ExperimentConfig::from_text("lr").is_err());
        assert!(ExperimentConfig::from_text("epochs=ten").is_err());
    }

    #[test]
    fn later_lines_override_earlier() {
        let c = ExperimentConfig::from_text("# comment\nepochs=3\n\nepochs=5\n").unwrap();
        assert_eq!(c.train.epochs_per_task, 5);
    }

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
        let mut c = ExperimentConfig::default();
        c.set("template_count", "0").unwrap();
        assert!(c.validate().is_err());
    }
}
