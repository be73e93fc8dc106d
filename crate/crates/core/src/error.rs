use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input text could not be understood (missing CIF tag, bad JSON, unknown symbol).
    #[error("parse error: {0}")]
    Parse(String),

    /// Input was understood but violates a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("shape error: {0}")]
    Shape(String),

    /// A NaN/Inf appeared in a tensor, loss or gradient.
    #[error("numerics error: {0}")]
    Numerics(String),

    #[error("featurization error: {0}")]
    Featurization(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Prefix the message with location context (file, line, record id).
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::Parse(m) => Error::Parse(format!("{ctx}: {m}")),
            Error::Validation(m) => Error::Validation(format!("{ctx}: {m}")),
            Error::Shape(m) => Error::Shape(format!("{ctx}: {m}")),
            Error::Numerics(m) => Error::Numerics(format!("{ctx}: {m}")),
            Error::Featurization(m) => Error::Featurization(format!("{ctx}: {m}")),
            other => other,
        }
    }
}

macro_rules! validation {
    ($($arg:tt)*) => { $crate::error::Error::Validation(format!($($arg)*)) };
}
macro_rules! parse_err {
    ($($arg:tt)*) => { $crate::error::Error::Parse(format!($($arg)*)) };
}
macro_rules! shape_err {
    ($($arg:tt)*) => { $crate::error::Error::Shape(format!($($arg)*)) };
}
pub(crate) use {parse_err, shape_err, validation};
