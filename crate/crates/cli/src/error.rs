use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config {path}: {source}")]
    ConfigRead {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}:{column}: {message}")]
    ConfigSyntax {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    ConfigSchema { path: PathBuf, message: String },

    #[error("invalid --seed-override `{0}`: expected name=value")]
    SeedOverride(String),

    #[error("{context} {path}: {source}")]
    Io {
        context: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    IncompleteRun { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] craft_core::Error),
}

/// Broad failure class, reflected in the process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    Config,
    Io,
    Runtime,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 3,
            ErrorKind::Io => 4,
            ErrorKind::Runtime => 5,
        }
    }
}

impl CliError {
    pub(crate) fn io(context: &'static str, path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            context,
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            CliError::ConfigRead { .. }
            | CliError::ConfigSyntax { .. }
            | CliError::ConfigSchema { .. }
            | CliError::SeedOverride(_) => ErrorKind::Config,
            CliError::Io { .. } | CliError::IncompleteRun { .. } => ErrorKind::Io,
            CliError::Core(e) => match e.root() {
                craft_core::Error::Config { .. } => ErrorKind::Config,
                craft_core::Error::Idx(_) => ErrorKind::Io,
                _ => ErrorKind::Runtime,
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind().exit_code()
    }

    /// Round in which a simulation failure happened, if any.
    pub fn round(&self) -> Option<usize> {
        match self {
            CliError::Core(craft_core::Error::Round { round, .. }) => Some(*round),
            _ => None,
        }
    }
}

/// Machine-readable failure record written as `error.json`.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorRecord {
    pub kind: ErrorKind,
    pub exit_code: i32,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub round: Option<usize>,
}

impl From<&CliError> for ErrorRecord {
    fn from(e: &CliError) -> Self {
        Self {
            kind: e.kind(),
            exit_code: e.exit_code(),
            message: e.to_string(),
            round: e.round(),
        }
    }
}
