use std::path::PathBuf;

use thiserror::Error;

use crate::volume::Shape3;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: Shape3, actual: Shape3 },

    #[error("buffer length {len} does not match shape {shape} ({expected} elements)")]
    BufferLength {
        shape: Shape3,
        len: usize,
        expected: usize,
    },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed header in {path}: {reason}")]
    Header { path: PathBuf, reason: String },

    #[error("unsupported format: {0}")]
    Format(String),

    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),

    #[error("non-finite loss at {stage} step {step}")]
    NonFinite { stage: &'static str, step: usize },

    #[error("{0}")]
    Empty(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn header(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Header {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
