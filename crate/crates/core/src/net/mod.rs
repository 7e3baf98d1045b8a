//! The shared image-to-feature extractor and its optimizer.

mod adam;
mod conv;
mod extractor;

pub use adam::AdamW;
pub use extractor::{
    Activation, Architecture, ConvSpec, FeatureExtractor, FeatureMap, ForwardCache,
    FrozenExtractor, Image,
};
