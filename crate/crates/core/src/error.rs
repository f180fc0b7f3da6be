use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// The variants line up with the exit-code classes of the command-line tool:
/// configuration problems, bad input data, violated mathematical
/// preconditions and plain I/O failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("tie in column {column}: rows {first} and {second} share the value {value}")]
    Tie {
        column: usize,
        first: usize,
        second: usize,
        value: f64,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{0}")]
    Precondition(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the input data rather than the configuration.
    pub fn is_data(&self) -> bool {
        matches!(self, Error::Tie { .. } | Error::Data(_) | Error::Csv(_))
    }

    /// True for violated preconditions of an estimator or bound.
    pub fn is_precondition(&self) -> bool {
        matches!(self, Error::Domain(_) | Error::Precondition(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
