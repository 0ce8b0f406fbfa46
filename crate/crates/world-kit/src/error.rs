//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("underdetermined system: {0}")]
    Underdetermined(String),

    #[error("degenerate alignment: {0}")]
    DegenerateAlignment(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("provider protocol violation: {0}")]
    Protocol(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("export error: {0}")]
    Export(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
