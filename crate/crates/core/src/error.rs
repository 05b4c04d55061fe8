use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file does not follow its declared format.
    #[error("format error: {0}")]
    Format(String),

    /// Input data is inconsistent or outside an operation's domain.
    #[error("invalid data: {0}")]
    Data(String),

    /// Array shapes disagree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Bad parameter or configuration value.
    #[error("invalid parameter: {0}")]
    Param(String),

    /// A loss or parameter became NaN or infinite.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
