use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A configuration value is out of its admissible range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A caller broke an operation's contract (e.g. an out-of-range action).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The requested combination is not supported.
    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// A precondition of a mathematical check does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// No data to summarise.
    #[error("empty input: {0}")]
    Empty(String),

    /// A checkpoint or dump could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
