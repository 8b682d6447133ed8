use std::fmt;

use m3p_core::PricingError;

/// Failure of a subcommand, carrying the process exit code class.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or input data (exit 2).
    Invalid(String),
    /// Anything that went wrong after inputs were accepted (exit 1).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn invalid(e: impl fmt::Display) -> Self {
        CliError::Invalid(e.to_string())
    }

    pub fn runtime(e: impl fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(m) => write!(f, "invalid input: {m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Errors raised while checking inputs are the caller's fault.
pub fn validation(e: PricingError) -> CliError {
    CliError::Invalid(e.to_string())
}

pub type CliResult<T> = Result<T, CliError>;
