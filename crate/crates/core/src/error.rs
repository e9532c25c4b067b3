use std::io;

use thiserror::Error;

/// Errors produced by every operation in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch on axis {axis}: expected {expected}, got {actual}")]
    AxisMismatch {
        axis: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("malformed tensor container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// The message without the category prefix of `Display`.
    pub fn message(&self) -> String {
        match self {
            Error::Shape(m)
            | Error::InvalidArgument(m)
            | Error::Validation(m)
            | Error::Format(m) => m.clone(),
            other => other.to_string(),
        }
    }

    /// Short machine-readable category, used by the CLI's one-line error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::AxisMismatch { .. } | Error::Shape(_) => "shape",
            Error::NonFinite { .. } => "non_finite",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Validation(_) => "validation",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "parse",
            Error::Image(_) => "image",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
