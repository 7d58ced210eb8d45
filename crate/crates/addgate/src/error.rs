use std::path::PathBuf;

/// Errors surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("{cell} requires a non-negative state, but entry {index} is {value}")]
    NegativeState {
        cell: &'static str,
        index: usize,
        value: f64,
    },

    #[error("{0} needs a memory vector `c` in the cell state")]
    MissingMemoryState(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("integer overflow in {0}")]
    Overflow(&'static str),

    #[error("non-finite loss {value} at epoch {epoch}, batch {batch}; aborting training")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        value: f64,
    },

    #[error("timing harness is busy; concurrent measurements are refused")]
    BenchBusy,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("bad file format: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(context: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::ShapeMismatch {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
