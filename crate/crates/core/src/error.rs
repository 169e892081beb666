use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the learning and control pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller violated a precondition (dimensions, ranges, configuration).
    #[error("usage error: {0}")]
    Usage(String),

    /// A non-finite value was produced. `index` locates it (trajectory step,
    /// rollout index or parameter component depending on the context).
    #[error("numeric error at index {index}: {msg}")]
    Numeric { index: usize, msg: String },

    /// A file could not be parsed or did not match what the caller expected.
    #[error("format error: {0}")]
    Format(String),

    /// Demonstrations or checkpoints belong to another environment.
    #[error("environment mismatch: expected `{expected}`, found `{found}`")]
    EnvMismatch { expected: String, found: String },

    /// Expert return fell below the configured sanity floor.
    #[error("demo generation rejected: expert mean return {mean:.3} below floor {floor:.3}")]
    SanityFloor { mean: f64, floor: f64 },

    /// Training aborted with a numeric failure at `(episode, t)`.
    #[error("training failed at episode {episode}, t={t}: {source}")]
    Training {
        episode: usize,
        t: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn numeric(index: usize, msg: impl Into<String>) -> Self {
        Error::Numeric { index, msg: msg.into() }
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Innermost error, looking through training wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Training { source, .. } => source.root(),
            other => other,
        }
    }
}
