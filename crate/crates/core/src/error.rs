use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A tensor extent did not match what the operation requires.
    #[error("{op}: dimension mismatch on axis `{axis}`: expected {expected}, got {actual}")]
    Dimension {
        op: &'static str,
        axis: &'static str,
        expected: String,
        actual: String,
    },

    #[error("{op}: invalid argument: {reason}")]
    InvalidArgument { op: &'static str, reason: String },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("non-finite {what} at iteration {iteration}")]
    NonFinite { what: String, iteration: usize },

    #[error("invalid model spec: {0}")]
    Spec(String),

    #[error("weight file: {0}")]
    WeightFormat(#[from] WeightFormatError),

    #[error("image {path}: {reason}")]
    Image { path: PathBuf, reason: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

/// Failures specific to reading a serialized model.
#[derive(Debug, Error)]
pub enum WeightFormatError {
    #[error("bad magic {0:?}")]
    BadMagic(Vec<u8>),
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("file truncated ({0} bytes)")]
    Truncated(usize),
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("spec mismatch: {0}")]
    SpecMismatch(String),
}

impl Error {
    pub(crate) fn dim(op: &'static str, axis: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Dimension {
            op,
            axis,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn invalid(op: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// True for failures caused by bad input data rather than model state.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Image { .. } | Error::Io { .. } | Error::Parse(_) | Error::Dimension { .. }
        )
    }
}
