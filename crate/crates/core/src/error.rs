use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("length mismatch: expected {expected} bits, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid chromosome character {found:?} at position {position}")]
    InvalidAlphabet { position: usize, found: char },

    #[error("invalid trap spec: {0}")]
    InvalidSpec(String),

    #[error("invalid EA parameters: {0}")]
    InvalidParams(String),

    #[error("invalid churn profile: {0}")]
    InvalidProfile(String),

    #[error("malformed request body: {0}")]
    MalformedBody(String),

    #[error("log looks malformed: {malformed} of {total} lines could not be parsed")]
    MalformedLog { malformed: usize, total: usize },

    #[error("power-law fit needs at least 3 ranks with count > 1, got {0}")]
    UndefinedFit(usize),

    #[error("I/O error: {0}")]
    Io(String),

    #[error("CSV error: {0}")]
    Csv(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
