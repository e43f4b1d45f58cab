use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("slate for user {user}: {msg}")]
    Slate { user: String, msg: String },

    #[error("invalid market data: {0}")]
    Market(String),

    #[error("user {user} appears in both {first} and {second}")]
    UserOverlap {
        user: String,
        first: String,
        second: String,
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("{algorithm} did not converge (last residual {residual})")]
    NotConverged { algorithm: String, residual: f64 },

    #[error("unknown user index {0}")]
    UnknownUser(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("missing: {0}")]
    Missing(String),

    #[error("cannot split {groups} groups into {k} folds")]
    TooFewGroups { groups: usize, k: usize },

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("corrupt serialized data: {0}")]
    Decode(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
