use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },

    #[error("config error at `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("invalid graph sequence: {0}")]
    Sequence(String),

    #[error("SVD did not converge on a {rows}x{cols} matrix")]
    SvdFailed { rows: usize, cols: usize },

    #[error("matrix is numerically zero")]
    ZeroMatrix,

    #[error("solver diverged at iteration {iteration}: non-finite values")]
    Diverged { iteration: usize },

    #[error("power iteration stagnated after {iterations} iterations")]
    Stagnation { iterations: usize },

    #[error("truth has a single class; AUC is undefined")]
    SingleClass,

    #[error("all {folds} cross-validation folds were skipped")]
    AllFoldsSkipped { folds: usize },

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
