use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad class of a failure, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad configuration or arguments.
    Usage,
    /// Malformed, missing or insufficient input data.
    Data,
    /// NaN/Inf or another numerical breakdown.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    Shape {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Data(String),

    #[error("{path}: row {row}: {message}")]
    Row { path: String, row: u64, message: String },

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("non-finite value during {stage} (epoch {epoch}, batch {batch})")]
    NonFinite {
        stage: &'static str,
        epoch: usize,
        batch: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Usage,
            Error::NonFinite { .. } => ErrorKind::Numeric,
            Error::Shape { .. }
            | Error::Data(_)
            | Error::Row { .. }
            | Error::Empty(_)
            | Error::Io { .. }
            | Error::Format { .. } => ErrorKind::Data,
        }
    }

    pub(crate) fn shape(op: &'static str, left: impl ToString, right: impl ToString) -> Self {
        Error::Shape {
            op,
            left: left.to_string(),
            right: right.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
