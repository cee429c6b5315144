use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failures decoding a `.mmot` motion file.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("magic check failed: expected \"MMOT\", found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("truncated payload: header declares {expected} bytes of {what}, {available} available")]
    Truncated { what: &'static str, expected: usize, available: usize },
    #[error("caption is not valid UTF-8")]
    BadCaption,
    #[error("trailing bytes after frame payload: {0}")]
    TrailingBytes(usize),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),
    #[error("decode error: {0}")]
    Decode(#[from] DecodeError),
    #[error("degenerate softmax: attention row {row} is fully blocked")]
    DegenerateSoftmax { row: usize },
    #[error("numeric failure at diffusion step {step}: {detail}")]
    NumericFailure { step: usize, detail: String },
    #[error("training failure: {0}")]
    TrainingFailure(String),
    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),
    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { context: path.into().display().to_string(), source }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
