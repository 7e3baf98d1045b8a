//! Pose-aware replay memory and the growing store of class meshes.

mod replay;
mod store;

pub use replay::{class_quotas, select_exemplars, Exemplar, ReplayBuffer, Selection};
pub use store::MeshStore;
