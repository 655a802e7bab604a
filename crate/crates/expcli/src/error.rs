use std::path::PathBuf;

use rls_core::RlsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExpError {
    #[error("config error in {field}: {message}")]
    Config { field: String, message: String },

    #[error("unknown scenario '{0}' (not a builtin name or a readable file)")]
    UnknownScenario(String),

    #[error("failed to parse {path}: {message}")]
    Parse { path: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("plot error: {0}")]
    Plot(String),

    #[error(transparent)]
    Core(#[from] RlsError),
}

impl ExpError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Exit code for the CLI: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } | Self::UnknownScenario(_) | Self::Parse { .. } => 2,
            Self::Core(RlsError::ParameterOutOfRange(_) | RlsError::DimensionMismatch { .. }) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, ExpError>;
