use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing input file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("ingestion failed: {0}")]
    Ingest(String),

    #[error("malformed record {id}: {reason}")]
    Record { id: String, reason: String },

    #[error("lead {lead} has zero variance over the training folds")]
    ZeroVariance { lead: String },

    #[error("unknown {kind} `{name}` (registered: {known})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Diverged {
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error("frozen parameter `{0}` changed during training")]
    FrozenDrift(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("all classes are undefined for AUC (each lacks positives or negatives)")]
    NoDefinedClass,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
