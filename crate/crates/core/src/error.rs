use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor dimensions do not fit together.
    #[error("sizing error: {0}")]
    Sizing(String),

    #[error("index ({row}, {col}) out of bounds for {height}x{width} grid")]
    OutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Malformed flow file. `field` names the offending header field or section.
    #[error("format error in {field}: {reason}")]
    Format { field: &'static str, reason: String },

    /// Malformed or mismatching weight file; names the tensor at fault.
    #[error("weight load error at tensor {tensor}: {reason}")]
    WeightLoad { tensor: String, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn sizing(msg: impl Into<String>) -> Self {
        Error::Sizing(msg.into())
    }

    pub(crate) fn format(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn weight(tensor: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::WeightLoad {
            tensor: tensor.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
