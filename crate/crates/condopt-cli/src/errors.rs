//! Error-to-exit-code mapping: 2 configuration, 3 data, 4 I/O, 5 internal.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Io(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Io(_) => 4,
            CliError::Internal(_) => 5,
        }
    }

    pub fn io(context: &str, e: std::io::Error) -> Self {
        CliError::Io(format!("{context}: {e}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<condopt::Error> for CliError {
    fn from(e: condopt::Error) -> Self {
        match e {
            condopt::Error::InvalidSpace(m) | condopt::Error::InvalidPrior(m) => {
                CliError::Config(m)
            }
            condopt::Error::Data(m) => CliError::Data(m),
            condopt::Error::Serialize(m) => CliError::Data(m),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
