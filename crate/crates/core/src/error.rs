use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures of the IDX reader/writer. Each malformation is its own variant.
#[derive(Debug, Error)]
pub enum IdxError {
    #[error("{path}: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("{path}: truncated file ({context})")]
    Truncated { path: PathBuf, context: &'static str },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("numerical divergence: {0}")]
    Divergence(String),
    #[error("unknown task id {0}")]
    UnknownTask(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty data: {0}")]
    EmptyData(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid task definition: {0}")]
    Task(String),
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization: {0}")]
    Serialize(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
