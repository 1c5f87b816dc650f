use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{name} out of domain: {value}")]
    Domain { name: &'static str, value: f64 },

    #[error("invalid tensor at (subject {subject}, state {state}, {row}, {col}): {reason}")]
    Tensor {
        subject: usize,
        state: usize,
        row: usize,
        col: usize,
        reason: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value in {term}")]
    Numerical { term: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical { .. })
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
