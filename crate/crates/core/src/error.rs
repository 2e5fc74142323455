use std::path::PathBuf;

/// Errors raised anywhere in the lab.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("insufficient exemplars: requested {requested}, repository holds {available}")]
    InsufficientExemplars { requested: usize, available: usize },

    #[error("malformed structure template {template:?}: {reason}")]
    MalformedStructure { template: String, reason: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("unknown item id {0:?}")]
    UnknownItem(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stale input {path}: produced under config hash {found}, current config expects {expected} (use --force to override)")]
    StaleInput {
        path: PathBuf,
        found: String,
        expected: String,
    },
}

impl Error {
    /// Process exit code: 1 for usage/config problems, 2 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InsufficientExemplars { .. } => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
