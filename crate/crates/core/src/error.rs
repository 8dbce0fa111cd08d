use thiserror::Error;

/// Errors raised by operator construction, iteration and configuration.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in vector")]
    NonFinite,

    #[error("non-finite iterate at step {0}")]
    NonFiniteIterate(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("stepsize out of range: {0}")]
    StepsizeOutOfRange(String),

    #[error("resolvent stepsizes differ: {0} vs {1}")]
    GammaMismatch(f64, f64),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
