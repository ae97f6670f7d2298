use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("label {label} at ({row}, {col}) is not in the tissue table")]
    UnknownLabel { label: i32, row: usize, col: usize },

    #[error("format error in {context}: {message}")]
    Format { context: String, message: String },

    #[error("infeasible sampling: {0}")]
    InfeasibleSampling(String),

    #[error("within-chunklet covariance is rank deficient: {deficient} of {dim} dimensions have zero variance (use a positive ridge)")]
    RankDeficient { deficient: usize, dim: usize },

    #[error("{path}:{line}: {message}")]
    Config {
        path: String,
        line: usize,
        message: String,
    },

    #[error("missing input {0}")]
    MissingInput(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            context: context.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
