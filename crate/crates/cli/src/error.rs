use std::fmt;
use std::path::Path;

use logloss_mc::Error;

/// A failed command, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    Io(String),
    Config(String),
    Data(String),
    Verification(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Verification(_) => 4,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io { .. } => CliError::Io(msg),
            Error::InvalidConfig(_)
            | Error::Parse { .. }
            | Error::InvalidPermutation(_)
            | Error::DuplicateClass(_)
            | Error::InvalidK(_) => CliError::Config(msg),
            Error::ViolationFound { .. } | Error::FormulaMismatch { .. } => CliError::Verification(msg),
            _ => CliError::Data(msg),
        }
    }
}
