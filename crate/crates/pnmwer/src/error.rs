//! Crate-wide error type. Variants map onto the CLI exit codes.

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// The caller asked for something inconsistent (bad flag combination,
    /// invalid hyperparameter). Exit code 1.
    #[error("usage: {0}")]
    Usage(String),

    /// A file could not be read or written. Exit code 2.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A line of an input file did not parse or violated a format invariant.
    /// Exit code 2.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// In-memory input violated a contract (non-finite score, missing or
    /// mismatched features, invalid span). Exit code 2.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A rate with a zero denominator was requested. Exit code 3.
    #[error("undefined rate: {0}")]
    UndefinedRate(String),

    /// A numerical failure such as training divergence. Exit code 3.
    #[error("numerical failure: {0}")]
    Numeric(String),

    /// Wraps another error with the utterance it occurred in.
    #[error("utterance {id}: {source}")]
    InUtterance {
        id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Attach an utterance id to an error.
    pub fn in_utterance(self, id: &str) -> Error {
        Error::InUtterance {
            id: id.to_string(),
            source: Box::new(self),
        }
    }

    /// Process exit code for this error: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Io { .. } | Error::Parse { .. } | Error::InvalidInput(_) => 2,
            Error::UndefinedRate(_) | Error::Numeric(_) => 3,
            Error::InUtterance { source, .. } => source.exit_code(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Error {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(path: &std::path::Path, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: path.display().to_string(),
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
