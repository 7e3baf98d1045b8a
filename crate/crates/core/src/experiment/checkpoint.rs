use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ExperimentConfig;
use crate::error::{Error, Result};
use crate::training::{LossParts, Model};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"INEMOCKP";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 32;

/// Metrics recorded when a task finishes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task: usize,
    pub classes: Vec<u32>,
    /// Accuracy on the test samples of every class seen so far.
    pub accuracy: f64,
    pub steps: usize,
    pub epoch_means: Vec<LossParts>,
}

/// A model together with the configuration that produced it and its
/// per-task history.
///
/// File layout: magic `INEMOCKP`, format version (u32 LE), payload length
/// (u64 LE), SHA-256 of the payload, then the payload as CBOR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: Model,
    pub config: ExperimentConfig,
    pub history: Vec<TaskRecord>,
}

/// Lowercase hex SHA-256.
pub fn digest_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut payload = Vec::new();
        ciborium::into_writer(self, &mut payload)
            .map_err(|e| Error::format("checkpoint", e.to_string()))?;
        let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&Sha256::digest(&payload));
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::CheckpointCorrupt("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion {
                expected: CHECKPOINT_VERSION.to_string(),
                found: version.to_string(),
            });
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        let payload = &bytes[HEADER_LEN..];
        if payload.len() as u64 != len {
            return Err(Error::CheckpointCorrupt(format!(
                "payload is {} bytes, header says {len}",
                payload.len()
            )));
        }
        if Sha256::digest(payload)[..] != bytes[20..HEADER_LEN] {
            return Err(Error::CheckpointCorrupt("payload digest mismatch".into()));
        }
        ciborium::from_reader(payload).map_err(|e| Error::CheckpointCorrupt(e.to_string()))
    }

    /// Writes the checkpoint and returns the digest of the whole file.
    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes()?;
        fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
        Ok(digest_hex(&bytes))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::ModelConfig;

    fn small() -> Checkpoint {
        let model = Model::new(ModelConfig {
            feature_dim: 8,
            hidden_widths: [4, 6],
            max_classes: 4,
            image_width: 16,
            image_height: 16,
            mesh_vertices: 30,
            bank_size: 8,
            replay_capacity: 8,
            ..ModelConfig::default()
        })
        .unwrap();
        Checkpoint {
            model,
            config: ExperimentConfig::default(),
            history: vec![TaskRecord {
                task: 0,
                classes: vec![1, 2],
                accuracy: 0.1 + 0.2,
                steps: 3,
                epoch_means: vec![LossParts {
                    l_cont: -0.0,
                    l_etf: 1e-300,
                    l_kd: f64::MIN_POSITIVE,
                    total: 1.0 / 3.0,
                }],
            }],
        }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let c = small();
        let a = c.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&a).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes().unwrap(), a);
        assert!(back.history[0].epoch_means[0].l_cont.is_sign_negative());
    }

    #[test]
    fn version_and_corruption_are_detected() {
        let a = small().to_bytes().unwrap();
        let mut v = a.clone();
        v[8] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&v),
            Err(Error::CheckpointVersion { .. })
        ));
        let mut flipped = a.clone();
        let last = flipped.len() - 1;
        flipped[last] ^= 1;
        assert!(matches!(
            Checkpoint::from_bytes(&flipped),
            Err(Error::CheckpointCorrupt(_))
        ));
        assert!(matches!(
            Checkpoint::from_bytes(b"INEMO"),
            Err(Error::CheckpointCorrupt(_))
        ));
    }
}
