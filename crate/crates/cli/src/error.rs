use std::fmt;

use hran_core::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const INTERNAL: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const DATA: u8 = 3;
    pub const NUMERIC: u8 = 4;
    pub const PARTIAL: u8 = 5;
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: exit::CONFIG,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            code: exit::DATA,
            message: message.into(),
        }
    }

    /// Any failure while reading a checkpoint is a configuration problem.
    pub fn checkpoint(err: Error) -> Self {
        CliError::config(err.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        let code = match &err {
            Error::Config(_) | Error::Checkpoint(_) | Error::MissingParam(_) | Error::Shape { .. } => {
                exit::CONFIG
            }
            Error::Data(_) | Error::Parse { .. } | Error::Io { .. } => exit::DATA,
            Error::NonFinite { .. } => exit::NUMERIC,
            Error::Cache(_) => exit::INTERNAL,
        };
        CliError {
            code,
            message: err.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
