use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("insufficient studies: need at least 2, got {0}")]
    InsufficientStudies(usize),

    #[error("study {index}: invalid {field} ({reason})")]
    InvalidStudy {
        index: usize,
        field: &'static str,
        reason: String,
    },

    #[error("numerical routine did not converge: {what} (achieved tolerance {achieved:e})")]
    NoConvergence { what: String, achieved: f64 },

    #[error("degenerate moment matching: {0}")]
    DegenerateMatching(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
