//! Library error type shared across modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum QsdError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is singular or numerically unsolvable: {0}")]
    Singular(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("state is not normalized: |norm - 1| = {0:.3e}")]
    NotNormalized(f64),

    #[error("run failed: {0}")]
    RunFailure(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, QsdError>;
