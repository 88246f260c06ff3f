use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected:?}, got {actual:?}")]
    Dimension {
        context: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("oracle-only operation: {columns} Jacobian columns exceeds the cap of {cap}")]
    OracleCap { columns: usize, cap: usize },

    #[error("layer index {index} out of range 1..={max}")]
    LayerIndex { index: usize, max: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("unsupported model format version {found} (expected {expected})")]
    FormatVersion { found: String, expected: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dimension(context: impl Into<String>, expected: &[usize], actual: &[usize]) -> Self {
        Error::Dimension {
            context: context.into(),
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}
