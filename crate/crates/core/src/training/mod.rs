//! Losses, vertex-feature updates, background bank and the per-task loop.

mod bank;
mod config;
mod correspondence;
mod losses;
mod model;
mod neural_mesh;
mod trainer;

pub use bank::BackgroundBank;
pub use config::{ModelConfig, TrainConfig};
pub use correspondence::{gather_correspondences, Correspondences};
pub use losses::{
    combined_loss, contrastive_loss, loss_cont, loss_etf, loss_kd, softmax_in_place, CandidateSet,
    FeatureLoss, LossContext, LossParts, SampleOutcome,
};
pub use model::{ClassInfo, Model, Sample, SampleLibrary, TaskData};
pub use neural_mesh::{momentum_update, NeuralMesh};
pub use trainer::{bg_balance, train_task, StepRecord, TaskTrace};
