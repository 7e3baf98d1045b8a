//! Experiment plumbing: configuration, checkpoints, task-sequence runs and
//! evaluation reports.

mod checkpoint;
mod config;
mod eval;
mod run;

pub use checkpoint::{digest_hex, Checkpoint, TaskRecord, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::ExperimentConfig;
pub use eval::{
    evaluate_classification, evaluate_pose, evaluate_self_render_pose, ClassificationReport,
    PoseReport,
};
pub use run::{
    evaluate_self_render, EvalReport, Experiment, PoseEvalReport, CODE_VERSION,
    REPORT_SCHEMA_VERSION,
};
