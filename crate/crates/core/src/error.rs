use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid action index {0}")]
    InvalidAction(usize),

    #[error("unknown action name {0:?}")]
    UnknownActionName(String),

    #[error("threshold mismatch: {left} vs {right}")]
    ThresholdMismatch { left: f64, right: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty class")]
    EmptyClass,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("covariance is not positive definite")]
    NotPositiveDefinite,

    #[error("missing affordance model for action {0}")]
    MissingModel(usize),

    #[error("grid geometry mismatch")]
    GeometryMismatch,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("environment failure: {0}")]
    Environment(String),

    #[error("corrupted snapshot token")]
    CorruptedSnapshot,

    #[error("all {0} search episodes failed")]
    SearchFailed(usize),

    #[error("untrained policy")]
    UntrainedPolicy,

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
