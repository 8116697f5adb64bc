use std::fmt;

/// Failure classes, each with its own process exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(nhskin::error::Error),
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Validation(_) => 3,
        }
    }
}

impl From<nhskin::error::Error> for CliError {
    fn from(e: nhskin::error::Error) -> Self {
        match e {
            nhskin::error::Error::InvalidParameter(msg) => CliError::Config(msg),
            other => CliError::Numerical(other),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
            CliError::Validation(msg) => write!(f, "validation failed: {msg}"),
        }
    }
}
