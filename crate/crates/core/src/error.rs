use std::io;

use thiserror::Error;

/// Errors produced by the correspondence engine.
#[derive(Debug, Error)]
pub enum CoveError {
    /// A caller-supplied parameter violates a precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("payload length mismatch: expected {expected} values, found {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The full similarity oracle refuses volumes above its token cap.
    #[error("volume has {tokens} tokens, above the full-similarity cap of {cap}; use the windowed tracer")]
    TooLarge { tokens: usize, cap: usize },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CoveError {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        CoveError::InvalidParameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, CoveError>;
