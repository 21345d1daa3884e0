use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by ingestion, training and the estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: row {row}, column `{column}`: {reason}")]
    Ingest {
        path: PathBuf,
        row: usize,
        column: String,
        reason: String,
    },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("model format: {0}")]
    Format(String),

    /// No training row supports the requested condition.
    #[error("empty support: {0}")]
    EmptySupport(String),

    /// A rule rectangle admits no training value for one of its coordinates.
    #[error("empty value pool for feature {feature} in rectangle {rectangle}")]
    EmptyPool { feature: usize, rectangle: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
