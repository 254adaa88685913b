use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: {msg}")]
    InvalidShape { op: &'static str, msg: String },

    #[error("log of non-positive value {value} at index {index}")]
    LogDomain { index: usize, value: f64 },

    #[error("backward root must have exactly one element, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("invalid geometry: W={width}, K={kernel}, S={stride}, P={padding}: {reason}")]
    Geometry {
        width: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        reason: &'static str,
    },

    #[error("invalid config field `{field}`: {constraint}")]
    Config { field: String, constraint: String },

    #[error("{0}")]
    InsufficientData(String),

    #[error("{path}: row {row}: {msg}")]
    Parse {
        path: PathBuf,
        row: usize,
        msg: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
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

impl Error {
    pub fn config(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            constraint: constraint.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
