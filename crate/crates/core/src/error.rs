use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("render is empty: object lies entirely behind the camera")]
    EmptyRender,

    #[error("class {0} is already allocated")]
    AlreadyAllocated(u32),

    #[error("allocation failed: {0}")]
    Allocation(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("no classes available for inference")]
    NoClasses,

    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("checkpoint version mismatch: expected {expected}, found {found}")]
    CheckpointVersion { expected: String, found: String },

    #[error("checkpoint rejected: {0}")]
    CheckpointCorrupt(String),

    #[error("malformed {what}: {detail}")]
    Format { what: String, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format {
            what: what.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
