//! Crate-wide error type.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong across the toolkit, in one enum so the CLI
/// can map errors onto its exit-code contract.
#[derive(Debug)]
pub enum Error {
    /// Shape or dimension mismatch between operands.
    Dimension(String),
    /// Mathematical domain violation (e.g. log of a non-positive value).
    Domain(String),
    /// A caller broke an API precondition.
    Contract(String),
    /// Malformed input file (CIFAR records, checkpoints, perturbed sets).
    Format(String),
    /// Invalid or incomplete run configuration.
    Config(String),
    /// Training produced a non-finite loss.
    Numeric(String),
    /// A serialized artifact failed an invariant re-check.
    Invariant(String),
    /// Underlying I/O failure.
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(msg) => write!(f, "dimension error: {msg}"),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Contract(msg) => write!(f, "contract error: {msg}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Numeric(msg) => write!(f, "numeric error: {msg}"),
            Error::Invariant(msg) => write!(f, "invariant violation: {msg}"),
            Error::Io(err) => write!(f, "i/o error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err)
    }
}

impl Error {
    /// Exit code the CLI maps this error onto: 2 config, 3 numeric abort,
    /// 4 invariant violation, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Numeric(_) => 3,
            Error::Invariant(_) => 4,
            _ => 1,
        }
    }
}
