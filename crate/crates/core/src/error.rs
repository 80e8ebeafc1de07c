use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("duplicate entry: {0}")]
    Duplicate(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category, used in CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Schema(_) => "schema",
            Error::Duplicate(_) => "duplicate",
            Error::Validation(_) => "validation",
            Error::Domain(_) => "domain",
            Error::InsufficientHistory(_) => "insufficient_history",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::Training(_) => "training",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    /// Process exit code: 2 validation, 3 training failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Training(_) => 3,
            Error::Io { .. } => 4,
            Error::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => 4,
            _ => 2,
        }
    }
}
