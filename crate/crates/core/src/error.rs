use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("variable count {n} outside supported range 1..={max}")]
    Capacity { n: usize, max: usize },

    #[error("expected {expected} values, found {found}")]
    Length { expected: usize, found: usize },

    #[error("variable count mismatch: expected n={expected}, found n={found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("subset {bits:#b} out of range for n={n}")]
    SubsetOutOfRange { bits: u32, n: usize },

    #[error("empty subset cannot be a primitive")]
    EmptyPrimitive,

    #[error("model index {index} out of range for {count} models")]
    ModelIndex { index: usize, count: usize },

    #[error("k={k} outside 1..={max}")]
    KOutOfRange { k: usize, max: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("need at least {needed} inputs, got {got}")]
    TooFewInputs { needed: usize, got: usize },

    #[error("non-finite loss at step {step}; learning rate too large?")]
    NonFiniteLoss { step: usize },

    #[error("{path}: unsupported format_version {found} (expected {expected})")]
    Version {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{path}: declared n={n} needs {expected} values, found {found}")]
    ValueCount {
        path: PathBuf,
        n: usize,
        expected: usize,
        found: usize,
    },

    #[error("{path}: non-finite value at mask index {mask}")]
    NonFiniteValue { path: PathBuf, mask: usize },

    #[error("{path}: duplicate model_id {model_id:?}")]
    DuplicateModel { path: PathBuf, model_id: String },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
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
