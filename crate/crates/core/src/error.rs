//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: String,
    },

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("invalid class index {label} for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("unknown category {value:?} for attribute {attribute:?}")]
    UnknownCategory { attribute: String, value: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("model file error: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
