use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("row {row}: expected {expected} cells, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}, column `{column}`: cannot parse {value:?} as a number")]
    BadNumber {
        row: usize,
        column: String,
        value: String,
    },

    #[error("schema: {0}")]
    Schema(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("group {group} has no examples with {what}")]
    EmptyGroup { group: usize, what: &'static str },

    #[error("soft-assignment polytope is infeasible for noisy group {noisy_group}")]
    InfeasiblePolytope { noisy_group: usize },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from user-supplied configuration or input files
    /// rather than from the numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::Schema(_)
                | Error::Io { .. }
                | Error::Csv(_)
                | Error::Json(_)
                | Error::RaggedRow { .. }
                | Error::BadNumber { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
