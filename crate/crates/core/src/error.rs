use thiserror::Error;

/// Errors produced by the learner, its oracles and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("weight vector has zero norm")]
    ZeroVector,

    #[error("dense tensor would have {entries} entries (cap {cap})")]
    SizeCap { entries: f64, cap: f64 },

    #[error("ill-conditioned indicator polynomial: {0}")]
    IllConditioned(String),

    #[error("infeasible instance request: {0}")]
    Infeasible(String),

    #[error("estimation refused: {0}")]
    EstimationRefused(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
