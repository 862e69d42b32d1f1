use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("numerical failure in {context}: {message}")]
    Numerical { context: String, message: String },

    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Idx(#[from] IdxError),

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("client {client}: {source}")]
    Client {
        client: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }

    pub(crate) fn mismatch(context: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            found,
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn in_round(self, round: usize) -> Self {
        Error::Round {
            round,
            source: Box::new(self),
        }
    }

    pub fn for_client(self, client: usize) -> Self {
        Error::Client {
            client,
            source: Box::new(self),
        }
    }

    /// Innermost error with round/client context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Round { source, .. } | Error::Client { source, .. } => source.root(),
            other => other,
        }
    }
}

/// Failures while reading IDX image/label files.
#[derive(Debug, Error)]
pub enum IdxError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: bad magic number at offset {offset}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        path: PathBuf,
        offset: usize,
        expected: u32,
        found: u32,
    },

    #[error("{path}: truncated at offset {offset}: needed {needed} more bytes, {available} available")]
    Truncated {
        path: PathBuf,
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("image file holds {images} items but label file holds {labels}")]
    CountMismatch { images: usize, labels: usize },
}
