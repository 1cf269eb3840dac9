use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index out of range: {what} = {value}, allowed 0..={max}")]
    OutOfRange {
        what: &'static str,
        value: usize,
        max: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("mode mismatch: expected {expected}, found {found}")]
    ModeMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("failed to decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("malformed manifest at line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable category, used by the command-line front end.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::OutOfRange { .. } => "out_of_range",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::ModeMismatch { .. } => "mode_mismatch",
            Error::UnsupportedFormat(_) => "unsupported_format",
            Error::Decode { .. } => "decode",
            Error::Checkpoint(_) => "checkpoint",
            Error::Manifest { .. } => "manifest",
            Error::NonFinite(_) => "non_finite",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
