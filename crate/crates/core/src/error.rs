use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, EccError>;

#[derive(Debug, Error)]
pub enum EccError {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("index {index} out of range for {what} of size {len}")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("inconsistent cache: {0}")]
    Consistency(String),

    #[error("syntax error at byte {offset}: expected {expected}, found {found}")]
    Syntax {
        offset: usize,
        expected: String,
        found: String,
    },

    #[error("invalid network structure: {0}")]
    Semantic(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("coarsening failed: {0}")]
    Coarsening(String),

    #[error("batching error: {0}")]
    Batching(String),

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("data integrity error in {file}: {message}")]
    Integrity { file: String, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EccError {
    pub(crate) fn dim(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        EccError::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        EccError::Contract(msg.into())
    }
}
