use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum UcdError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("token id {id} out of embedding range {vocab_size}")]
    TokenOutOfRange { id: usize, vocab_size: usize },

    #[error("covariance of mixture component {component} is not positive-definite")]
    NotPositiveDefinite { component: usize },

    #[error("zero diagonal entry {index} in covariance of component {component}")]
    ZeroDiagonal { component: usize, index: usize },

    #[error("non-finite {term} during training (epoch {epoch}, batch {batch})")]
    NonFiniteLoss {
        term: &'static str,
        epoch: usize,
        batch: usize,
    },

    #[error("missing social graph: {0}")]
    MissingGraph(String),

    #[error("AUROC undefined: labels contain a single class")]
    SingleClass,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl UcdError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        UcdError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, UcdError>;
