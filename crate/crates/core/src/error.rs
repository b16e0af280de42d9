//! Error type shared by every module in the crate.

use std::fmt;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors emitted by tensor math, network construction, and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Shapes of two operands cannot be combined.
    Dimension(String),
    /// A scalar argument is out of its allowed range.
    Argument(String),
    /// A network or experiment configuration is invalid.
    Config(String),
    /// Input data is malformed or inconsistent.
    Data(String),
    /// A non-finite value appeared where the math requires finite ones.
    Numeric(String),
    /// Wrapper around I/O failures when persisting artifacts.
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(msg) => write!(f, "dimension error: {msg}"),
            Error::Argument(msg) => write!(f, "argument error: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
            Error::Numeric(msg) => write!(f, "numeric error: {msg}"),
            Error::Io(msg) => write!(f, "i/o error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
