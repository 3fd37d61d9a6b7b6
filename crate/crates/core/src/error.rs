use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the scoring pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("model `{model}`: {message}")]
    Model { model: String, message: String },

    #[error("model `{model}`: {source}")]
    InModel {
        model: String,
        #[source]
        source: Box<Error>,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("unknown model id `{0}`")]
    UnknownModel(String),

    #[error("combinatorial budget exceeded: C({pool}, {k}) = {count} > {budget}")]
    Budget {
        pool: usize,
        k: usize,
        count: u128,
        budget: u128,
    },

    #[error("instance too large for the exact solver: {rows}x{cols} exceeds {limit} cells")]
    TooLarge {
        rows: usize,
        cols: usize,
        limit: usize,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn model(model: impl Into<String>, err: Error) -> Self {
        match err {
            Error::Model { .. } | Error::InModel { .. } => err,
            other => Error::InModel {
                model: model.into(),
                source: Box::new(other),
            },
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_computational(&self) -> bool {
        match self {
            Error::Numerical(_) => true,
            Error::InModel { source, .. } => source.is_computational(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
