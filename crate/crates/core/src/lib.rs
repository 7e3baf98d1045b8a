//! Incremental neural mesh models.
//!
//! Every class is represented by a cuboid mesh whose vertices carry unit
//! feature vectors. A small convolutional extractor maps images to unit
//! feature maps; training aligns extracted features with the projected mesh
//! vertices, and inference classifies by vertex matching and estimates pose
//! by render-and-compare. New classes arrive in tasks; a pose-aware replay
//! buffer, distillation from the previous extractor and a fixed equiangular
//! partition of the feature sphere keep old classes usable.

pub mod bench;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod inference;
pub mod latent;
pub mod memory;
pub mod net;
pub mod training;
pub mod vectors;

pub use error::{Error, Result};
