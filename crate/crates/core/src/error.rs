use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate point: zero-norm vector has no direction")]
    DegeneratePoint,

    #[error("degenerate axis solutions: stacked rows are singular (smallest singular value {0:e})")]
    SingularRows(f64),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("inlier threshold must be positive and finite, got {0}")]
    InvalidEpsilon(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("registration failed: {0}")]
    RegistrationFailed(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: unsupported format: {msg}")]
    UnsupportedFormat { path: PathBuf, msg: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// True for failures of the solver itself, as opposed to bad input or I/O.
    pub fn is_registration_failure(&self) -> bool {
        matches!(
            self,
            Error::SingularRows(_) | Error::RegistrationFailed(_) | Error::DegeneratePoint
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
