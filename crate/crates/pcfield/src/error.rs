use pcfield_core::Error as CoreError;

/// Failures that stop a command before any artifact is written.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("minimality check failed: {0}")]
    Minimality(String),

    #[error("{0}")]
    Compute(CoreError),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn schema(e: impl std::fmt::Display) -> Self {
        CliError::Schema(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => 3,
            CliError::Minimality(_) => 2,
            CliError::Compute(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::MinimalityViolation { .. } => CliError::Minimality(e.to_string()),
            other => CliError::Compute(other),
        }
    }
}
