use std::fmt;

use dpe_core::Error;

pub const INPUT: u8 = 2;
pub const QUERY: u8 = 3;
pub const CAPABILITY: u8 = 4;
pub const FAILURE: u8 = 1;

/// An error carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError { code: INPUT, message: message.into() }
    }

    pub fn query(message: impl Into<String>) -> Self {
        CliError { code: QUERY, message: message.into() }
    }

    pub fn capability(message: impl Into<String>) -> Self {
        CliError { code: CAPABILITY, message: message.into() }
    }

    /// Prefixes the message with where the error happened.
    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Query(_) => QUERY,
            Error::NonFinite { .. } => FAILURE,
            _ => INPUT,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::input(e.to_string())
    }
}
