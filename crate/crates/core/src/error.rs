use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum AguError {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("empty set passed to {0}")]
    EmptySet(&'static str),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("unknown reference: {0}")]
    Reference(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    TrainingDiverged { epoch: usize, loss: f64 },

    #[error("unlearning diverged at epoch {epoch}: term {term} = {value}")]
    UnlearnDiverged {
        epoch: usize,
        term: &'static str,
        value: f64,
    },

    #[error("edge attack impossible: {0}")]
    AttackImpossible(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = AguError> = std::result::Result<T, E>;

impl AguError {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        AguError::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        AguError::Domain {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AguError::Io {
            path: path.into(),
            source,
        }
    }
}
