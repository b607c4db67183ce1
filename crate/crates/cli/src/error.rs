use std::fmt;

/// A failure with its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable, malformed or invalid configuration or input (exit 2).
    Config(String),
    /// Training diverged (exit 3).
    Training(String),
    /// Anything else, mostly I/O (exit 1).
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Training(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Training(m) => write!(f, "training failed: {m}"),
            CliError::Other(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<boed_core::Error> for CliError {
    fn from(e: boed_core::Error) -> Self {
        use boed_core::Error as E;
        match e {
            E::Diverged(_) | E::NonFinite { .. } | E::LogDomain { .. } => CliError::Training(e.to_string()),
            E::Invalid(_) | E::Json(_) | E::Snapshot(_) | E::Shape { .. } => CliError::Config(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
