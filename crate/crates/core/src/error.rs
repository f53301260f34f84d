use std::path::PathBuf;

/// Errors raised by samplers, estimators and the experiment harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("log-target returned NaN at iteration {iteration}")]
    NanTarget { iteration: usize },

    #[error("chain aborted: {0}")]
    Aborted(String),

    #[error("covariance of batch {batch} is singular even after jitter")]
    SingularBatch { batch: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("non-finite derivative at anchor for item {item}")]
    NonFiniteDerivative { item: usize },

    #[error("simulator failed: {0}")]
    Simulator(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
