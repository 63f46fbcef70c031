use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("rank-deficient matrix: {0}")]
    RankDeficient(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("budget error: {0}")]
    Budget(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("sample too small: {0}")]
    SampleTooSmall(String),

    #[error("inconsistent moments: {0}")]
    MomentInconsistency(String),

    #[error("degenerate support: {0}")]
    DegenerateSupport(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable tag used in reports and CLI output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Domain(_) => "domain",
            Error::RankDeficient(_) => "rank_deficient",
            Error::NumericFailure(_) => "numeric_failure",
            Error::Budget(_) => "budget",
            Error::State(_) => "state",
            Error::SampleTooSmall(_) => "sample_too_small",
            Error::MomentInconsistency(_) => "moment_inconsistency",
            Error::DegenerateSupport(_) => "degenerate_support",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
