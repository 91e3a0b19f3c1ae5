use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible tensor or image shapes.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// An API was called in a way its contract forbids.
    #[error("usage error: {0}")]
    Usage(String),

    /// Invalid model or run configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Input data violates a domain invariant (e.g. a class index out of range).
    #[error("data error: {0}")]
    Data(String),

    /// A computation produced NaN or infinity.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A file exists but its contents are malformed.
    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A phantom specification cannot be realised on its canvas.
    #[error("generation error: {0}")]
    Generation(String),

    /// Fold reports disagree on which metrics they carry.
    #[error("fold {fold} report differs from fold 0 at metric {metric:?}")]
    MetricSchema { fold: usize, metric: String },

    /// Checkpoint parameters do not match the model built from a config.
    #[error("checkpoint mismatch: {}", .0.join("; "))]
    Mismatch(Vec<String>),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format { path: path.into(), msg: msg.into() }
    }
}

macro_rules! dim_err {
    ($($arg:tt)*) => { $crate::error::Error::Dimension(format!($($arg)*)) };
}
pub(crate) use dim_err;
