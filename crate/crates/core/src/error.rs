use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty data: {0}")]
    Empty(String),

    #[error("label out of range at sample {index}: {label} >= {class_count}")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        class_count: usize,
    },

    #[error("non-finite feature at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("csv error at row {row}, column {col}: {msg}")]
    CsvCell { row: usize, col: usize, msg: String },

    #[error("insufficient samples in class {class}: need {needed}, have {available}")]
    InsufficientClass {
        class: usize,
        needed: usize,
        available: usize,
    },

    #[error("balanced label strategy infeasible: {0}; use the pool_random strategy instead")]
    BalancedInfeasible(String),

    #[error("classes with zero support: {0:?}")]
    ZeroSupport(Vec<usize>),

    #[error("query prerequisite missing: {0}")]
    MissingInput(&'static str),

    #[error("training failed: {0}")]
    Training(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
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
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
