use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    evaluate_classification, evaluate_pose, evaluate_self_render_pose, Checkpoint,
    ExperimentConfig, TaskRecord,
};
use crate::bench::{
    library_of, occlude, random_pose, AzimuthMode, Dataset, GeneratedSample, TaskSequence,
};
use crate::error::{Error, Result};
use crate::inference::mean_task_accuracy;
use crate::training::{train_task, Model, SampleLibrary, TaskData, TaskTrace};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Classification results of a checkpoint on the classes it has seen.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub code_version: String,
    pub config: BTreeMap<String, String>,
    pub tasks_trained: usize,
    pub classes: Vec<u32>,
    /// Accuracy on all seen classes after each task, from the training history.
    pub task_accuracy: Vec<f64>,
    pub mean_task_accuracy: f64,
    pub final_accuracy: f64,
    pub samples: usize,
    pub confusion: BTreeMap<u32, BTreeMap<u32, usize>>,
    pub per_class_accuracy: BTreeMap<u32, f64>,
    pub fallback_count: usize,
    /// Accuracy per occlusion level; `none` is the test set as stored.
    pub occlusion_accuracy: BTreeMap<String, f64>,
}

/// Pose accuracy of a checkpoint, on dataset images or on self-renders.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoseEvalReport {
    pub schema_version: u32,
    pub code_version: String,
    pub config: BTreeMap<String, String>,
    pub mode: String,
    pub classes: Vec<u32>,
    pub samples: usize,
    pub thresholds: Vec<f64>,
    pub accuracy: Vec<f64>,
    pub median_error: f64,
    pub per_class_accuracy: BTreeMap<u32, Vec<f64>>,
    pub loss_increases: usize,
}

/// A dataset, its task sequence and the configuration driving the run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub dataset: Dataset,
    pub samples: BTreeMap<u64, GeneratedSample>,
    pub library: SampleLibrary,
    pub sequence: TaskSequence,
}

impl Experiment {
    pub fn new(
        config: ExperimentConfig,
        dataset: Dataset,
        samples: BTreeMap<u64, GeneratedSample>,
    ) -> Result<Self> {
        config.validate()?;
        let sequence = TaskSequence::from_records(dataset.records(), &config.split, config.split_seed)?;
        let library = library_of(&samples);
        if let Some(missing) = dataset.entries.iter().find(|e| !samples.contains_key(&e.record.id)) {
            return Err(Error::NotFound(format!("sample {}", missing.record.id)));
        }
        Ok(Self {
            config,
            dataset,
            samples,
            library,
            sequence,
        })
    }

    /// Loads the dataset directory named by `config.data`.
    pub fn open(config: ExperimentConfig) -> Result<Self> {
        let root = config
            .data
            .clone()
            .ok_or_else(|| Error::invalid("no dataset given"))?;
        Self::open_at(config, &root)
    }

    pub fn open_at(config: ExperimentConfig, root: &Path) -> Result<Self> {
        let dataset = Dataset::open(root)?;
        let samples = dataset.load_samples(root)?;
        Self::new(config, dataset, samples)
    }

    pub fn model_config(&self) -> crate::training::ModelConfig {
        self.config.resolved_model(
            self.dataset.classes.len(),
            self.dataset.config.image_width,
            self.dataset.config.image_height,
        )
    }

    /// An untrained checkpoint.
    pub fn new_checkpoint(&self) -> Result<Checkpoint> {
        Ok(Checkpoint {
            model: Model::new(self.model_config())?,
            config: self.config.clone(),
            history: Vec::new(),
        })
    }

    pub fn task_count(&self) -> usize {
        self.sequence.tasks.len()
    }

    /// Test samples of tasks `0..tasks`.
    pub fn test_ids(&self, tasks: usize) -> Vec<u64> {
        self.sequence.tasks[..tasks.min(self.task_count())]
            .iter()
            .flat_map(|t| t.test.iter().copied())
            .collect()
    }

    fn check_model(&self, model: &Model) -> Result<()> {
        let (w, h) = (self.dataset.config.image_width, self.dataset.config.image_height);
        if model.config.image_width != w || model.config.image_height != h {
            return Err(Error::invalid(format!(
                "model expects {}x{} images, dataset has {w}x{h}",
                model.config.image_width, model.config.image_height
            )));
        }
        if model.tasks_trained > self.task_count() {
            return Err(Error::invalid(format!(
                "model has seen {} tasks, split {:?} has {}",
                model.tasks_trained,
                self.config.split,
                self.task_count()
            )));
        }
        Ok(())
    }

    /// Trains the next task of the sequence and appends it to the history.
    pub fn train_next(&self, checkpoint: &mut Checkpoint) -> Result<TaskTrace> {
        self.check_model(&checkpoint.model)?;
        let i = checkpoint.model.tasks_trained;
        let split = self
            .sequence
            .tasks
            .get(i)
            .ok_or_else(|| Error::invalid("every task of the split is already trained"))?;
        let task = TaskData {
            classes: split
                .classes
                .iter()
                .map(|&c| self.dataset.class_info(c))
                .collect::<Result<_>>()?,
            sample_ids: split.train.clone(),
        };
        let trace = train_task(&mut checkpoint.model, &task, &self.library, &self.config.train)?;
        let acc = evaluate_classification(&checkpoint.model, &self.library, &self.test_ids(i + 1))?;
        checkpoint.history.push(TaskRecord {
            task: i,
            classes: split.classes.clone(),
            accuracy: acc.accuracy,
            steps: trace.steps.len(),
            epoch_means: trace.epoch_means.clone(),
        });
        Ok(trace)
    }

    fn echo(&self) -> BTreeMap<String, String> {
        self.config.entries().into_iter().collect()
    }

    /// Test samples of the seen tasks with occluders added at `level`.
    pub fn occluded_library(
        &self,
        ids: &[u64],
        level: crate::bench::OcclusionLevel,
    ) -> Result<SampleLibrary> {
        let seeds: BTreeMap<u64, u64> = self
            .dataset
            .entries
            .iter()
            .map(|e| (e.record.id, e.record.background_seed))
            .collect();
        let mut out = BTreeMap::new();
        for id in ids {
            let s = &self.samples[id];
            out.insert(*id, occlude(s, level, seeds[id])?);
        }
        Ok(library_of(&out))
    }

    pub fn evaluate(&self, checkpoint: &Checkpoint) -> Result<EvalReport> {
        let model = &checkpoint.model;
        self.check_model(model)?;
        let tasks = model.tasks_trained;
        if tasks == 0 {
            return Err(Error::NoClasses);
        }
        let ids = self.test_ids(tasks);
        let clean = evaluate_classification(model, &self.library, &ids)?;
        let mut occlusion_accuracy = BTreeMap::new();
        for level in &self.config.eval_occlusion {
            let acc = match level {
                None => clean.accuracy,
                Some(l) => {
                    let lib = self.occluded_library(&ids, *l)?;
                    evaluate_classification(model, &lib, &ids)?.accuracy
                }
            };
            occlusion_accuracy.insert(level.map_or("none".into(), |l| l.to_string()), acc);
        }
        let task_accuracy: Vec<f64> = checkpoint.history.iter().map(|r| r.accuracy).collect();
        Ok(EvalReport {
            schema_version: REPORT_SCHEMA_VERSION,
            code_version: CODE_VERSION.into(),
            config: self.echo(),
            tasks_trained: tasks,
            classes: model.class_ids(),
            mean_task_accuracy: mean_task_accuracy(&task_accuracy).unwrap_or(clean.accuracy),
            task_accuracy,
            final_accuracy: clean.accuracy,
            samples: clean.samples,
            confusion: clean.confusion,
            per_class_accuracy: clean.per_class_accuracy,
            fallback_count: clean.fallback_count,
            occlusion_accuracy,
        })
    }

    /// Pose estimation on the seen test images with the true class given.
    pub fn evaluate_pose(&self, checkpoint: &Checkpoint) -> Result<PoseEvalReport> {
        let model = &checkpoint.model;
        self.check_model(model)?;
        if model.tasks_trained == 0 {
            return Err(Error::NoClasses);
        }
        let ids = self.test_ids(model.tasks_trained);
        let r = evaluate_pose(
            model,
            &self.library,
            &ids,
            self.config.template_count,
            &self.config.thresholds,
            &self.config.refine_settings(),
        )?;
        Ok(pose_report(&self.config, model, "dataset", r))
    }
}

fn pose_report(
    config: &ExperimentConfig,
    model: &Model,
    mode: &str,
    r: super::PoseReport,
) -> PoseEvalReport {
    PoseEvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        code_version: CODE_VERSION.into(),
        config: config.entries().into_iter().collect(),
        mode: mode.into(),
        classes: model.class_ids(),
        samples: r.samples,
        thresholds: r.thresholds,
        accuracy: r.accuracy,
        median_error: r.median_error,
        per_class_accuracy: r.per_class_accuracy,
        loss_increases: r.loss_increases,
    }
}

/// Pose recovery on noise-free renders of the stored meshes at
/// `config.self_render_per_class` random poses per class. Needs no dataset.
pub fn evaluate_self_render(checkpoint: &Checkpoint, seed: u64) -> Result<PoseEvalReport> {
    let config = &checkpoint.config;
    let model = &checkpoint.model;
    if model.meshes.is_empty() {
        return Err(Error::NoClasses);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poses = model
        .class_ids()
        .into_iter()
        .map(|c| {
            let ps = (0..config.self_render_per_class)
                .map(|_| random_pose(&mut rng, AzimuthMode::Uniform))
                .collect();
            (c, ps)
        })
        .collect();
    let r = evaluate_self_render_pose(
        model,
        &poses,
        config.template_count,
        &config.thresholds,
        &config.refine_settings(),
    )?;
    Ok(pose_report(config, model, "self-render", r))
}
