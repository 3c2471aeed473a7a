use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid parameter `{name}`: {msg}")]
    InvalidParam { name: &'static str, msg: String },

    #[error("class {class} has {available} labeled nodes, {required} required")]
    ClassTooSmall {
        class: i64,
        available: usize,
        required: usize,
    },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("k-means needs at least k points (n = {n}, k = {k})")]
    TooFewPoints { n: usize, k: usize },

    #[error("graph has {available} edges, split needs {required}")]
    NotEnoughEdges { available: usize, required: usize },

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("memory bank used before initialization")]
    BankUninitialized,

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(op: &'static str, detail: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn param(name: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            msg: msg.into(),
        }
    }
}
