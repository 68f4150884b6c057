use std::path::PathBuf;

/// Error type shared by every module in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad tensor file {path}: {reason}")]
    BadTensor { path: PathBuf, reason: String },

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn bad_tensor(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::BadTensor {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub fn shape(context: &'static str, expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            context,
            expected: expected.into(),
            actual: actual.into(),
        }
    }
}
