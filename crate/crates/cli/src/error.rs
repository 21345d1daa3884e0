use thiserror::Error;

/// Failure classes, each with its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("query error: {0}")]
    Query(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Query(_) => 4,
            CliError::Internal(_) => 5,
        }
    }
}

impl From<cfrules::Error> for CliError {
    fn from(e: cfrules::Error) -> Self {
        use cfrules::Error as E;
        let text = e.to_string();
        match e {
            E::Ingest { .. } | E::MissingColumn(_) | E::Schema(_) | E::Csv(_) | E::EmptyInput(_) => CliError::Data(text),
            E::InvalidParameter(_) => CliError::Config(text),
            E::EmptySupport(_) | E::EmptyPool { .. } => CliError::Query(text),
            E::Format(_) | E::Json(_) => CliError::Data(text),
            E::Training(_) | E::Io(_) => CliError::Internal(text),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
