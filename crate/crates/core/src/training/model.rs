use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BackgroundBank, ModelConfig};
use crate::error::Result;
use crate::geometry::{Camera, Pose};
use crate::latent::{default_population_size, LatentPartition};
use crate::memory::{MeshStore, ReplayBuffer};
use crate::net::{Architecture, FeatureExtractor, Image};

/// One annotated training or test image.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: u64,
    pub class_id: u32,
    pub pose: Pose,
    pub image: Image,
}

/// Samples addressable by id; replay exemplars refer into it.
pub type SampleLibrary = BTreeMap<u64, Sample>;

/// A class and the extent of its cuboid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub id: u32,
    pub dims: [f64; 3],
}

/// The classes introduced by one task and the ids of its training samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub classes: Vec<ClassInfo>,
    pub sample_ids: Vec<u64>,
}

/// Everything that persists across tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub extractor: FeatureExtractor,
    pub meshes: MeshStore,
    pub bank: BackgroundBank,
    pub partition: LatentPartition,
    pub replay: ReplayBuffer,
    pub camera: Camera,
    pub tasks_trained: usize,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let [h0, h1] = config.hidden_widths;
        let extractor = FeatureExtractor::new(
            Architecture::three_layer([h0, h1, config.feature_dim], true),
            config.seed,
        )?;
        let population = match config.population_size {
            0 => default_population_size(config.mesh_vertices, config.max_classes),
            n => n,
        };
        let partition = LatentPartition::new(
            config.max_classes,
            config.feature_dim,
            population,
            config.seed.wrapping_add(11),
        )?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(23));
        let bank = BackgroundBank::new(config.bank_size, config.feature_dim, &mut rng)?;
        let replay = ReplayBuffer::new(config.replay_capacity, config.azimuth_bins)?;
        let camera = Camera::desk(config.image_width, config.image_height);
        Ok(Self {
            config,
            extractor,
            meshes: MeshStore::new(),
            bank,
            partition,
            replay,
            camera,
            tasks_trained: 0,
        })
    }

    /// Camera matching the extractor's output resolution.
    pub fn feature_camera(&self) -> Camera {
        self.camera.downsampled(self.extractor.stride())
    }

    pub fn class_ids(&self) -> Vec<u32> {
        self.meshes.class_ids()
    }
}
