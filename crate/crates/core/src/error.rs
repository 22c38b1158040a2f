use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
///
/// Variants fall into two families that callers (the CLI in particular) treat
/// differently: data-contract violations (bad shapes, bad files, bad
/// parameters) and numerical failures (singular systems, rank deficiency).
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty sample")]
    EmptySample,

    #[error("{path}: row {row}: {message}")]
    Csv {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("singular system at fraction q={q}: {message}")]
    Singular { q: usize, message: String },

    #[error("quantile for level {0} not available")]
    MissingQuantile(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for failures of the numerical pipeline, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient(_) | Error::Singular { .. } | Error::Numerical(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
