use thiserror::Error;

use crate::envs::EnvError;
use crate::ndgrad::NdError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Nd(#[from] NdError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid weight vector: {0}")]
    InvalidWeights(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Csv(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
