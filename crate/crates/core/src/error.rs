use thiserror::Error;

/// Errors raised by the detection pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("insufficient length: need at least {required} samples, got {actual}")]
    InsufficientLength { required: usize, actual: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid chain state: {0}")]
    InvalidState(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("trace contains no stored samples")]
    EmptyTrace,

    #[error("no call: {0}")]
    NoCall(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable snake_case tag for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSeries(_) => "invalid_series",
            Error::InsufficientLength { .. } => "insufficient_length",
            Error::Domain(_) => "domain",
            Error::InvalidState(_) => "invalid_state",
            Error::InvalidConfig(_) => "invalid_config",
            Error::EmptyTrace => "empty_trace",
            Error::NoCall(_) => "no_call",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }

    /// True for broken internal invariants rather than bad input.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::InvalidState(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
