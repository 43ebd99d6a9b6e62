//! Error type shared by the whole crate.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Numerical breakdown (SVD non-convergence, zero embedding rows, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Guard against accidentally materializing quadratic objects in
    /// production paths; only the test oracles may build dense matrices.
    #[error("dense similarity oracle: n = {n} exceeds cap of {cap}")]
    DenseCap { n: usize, cap: usize },

    /// A failure inside one experiment trial, keeping the cause's class.
    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by bad input (files, flags, malformed data)
    /// rather than runtime/numerical breakdown. The CLI maps these to exit
    /// code 2 and everything else to exit code 1.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::InvalidArgument(_)
            | Error::DimensionMismatch(_) => true,
            Error::Trial { source, .. } => source.is_usage(),
            _ => false,
        }
    }
}
