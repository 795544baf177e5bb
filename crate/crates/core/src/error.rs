use alloc::string::String;

/// Errors produced by the tracking core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("sequence too short: need at least {needed} elements, got {got}")]
    EmptySequence { needed: usize, got: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("index {index} out of bounds for codebook of size {k}")]
    OutOfBounds { index: usize, k: usize },
    #[error("non-finite value encountered: {0}")]
    Numeric(String),
    #[error("length mismatch: {0}")]
    Shape(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = core::result::Result<T, Error>;
