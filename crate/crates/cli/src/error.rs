use std::fmt;

use cd_core::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INTERNAL: i32 = 1;
    /// Bad config, bad input file, or a missing upstream artifact.
    pub const VALIDATION: i32 = 2;
    pub const GENERATION: i32 = 3;
    pub const TRAINING: i32 = 4;
    pub const IO: i32 = 5;
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError {
            code: exit::VALIDATION,
            message: message.into(),
        }
    }

    pub fn generation(message: impl Into<String>) -> Self {
        CliError {
            code: exit::GENERATION,
            message: message.into(),
        }
    }

    /// An artifact produced by `stage` is absent.
    pub fn missing(what: &std::path::Path, stage: &str) -> Self {
        CliError::validation(format!(
            "missing {}; run `{stage}` first",
            what.display()
        ))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Training(_) => exit::TRAINING,
            Error::Generation { .. } | Error::EmptyPool => exit::GENERATION,
            Error::File { .. } | Error::Io(_) | Error::Json(_) => exit::IO,
            _ => exit::VALIDATION,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError {
            code: exit::IO,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
