use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// A bad or unknown configuration key. `key` is the dotted config key.
    #[error("config error: `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("{path}:{line}: {msg}")]
    Syntax { path: PathBuf, line: usize, msg: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Core(#[from] grcca::Error),

    #[error("{failed} of {total} acceptance criteria failed")]
    CriteriaFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        CliError::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 for numeric divergence, 3 for failed
    /// acceptance criteria, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(grcca::Error::Diverged { .. } | grcca::Error::NonFinite { .. }) => 2,
            CliError::CriteriaFailed { .. } => 3,
            _ => 1,
        }
    }
}
