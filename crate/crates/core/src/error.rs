use thiserror::Error;

/// Errors surfaced by ring, scheme, share and protocol operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter mismatch: {0}")]
    ParamMismatch(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("serialization error: {0}")]
    Serialization(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("correlated randomness exhausted: {0}")]
    TripleExhausted(&'static str),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
