use thiserror::Error;

/// Errors raised by estimation, sampling and I/O routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("no observations within bandwidth {h} of t0 = {t0}")]
    EmptyWindow { t0: f64, h: f64 },

    #[error("tile {tile} centred at {center} has an empty window")]
    EmptyTile { tile: usize, center: f64 },

    #[error("eigendecomposition failed: {0}")]
    Decomposition(String),

    #[error("point t = {0} lies outside the estimator's domain")]
    OutOfDomain(f64),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Short machine-readable class name, used for CLI exit reporting.
    pub fn class(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::IndexOutOfRange(_) => "IndexOutOfRange",
            Error::InvalidParameter { .. } => "InvalidParameter",
            Error::EmptyWindow { .. } => "EmptyWindow",
            Error::EmptyTile { .. } => "EmptyTile",
            Error::Decomposition(_) => "Decomposition",
            Error::OutOfDomain(_) => "OutOfDomain",
            Error::Parse { .. } => "Parse",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
