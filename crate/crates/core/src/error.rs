use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("invalid index: {0}")]
    InvalidIndex(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("insufficient entities: need at least {needed}, got {got}")]
    InsufficientEntities { needed: usize, got: usize },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("degenerate test: {0}")]
    DegenerateTest(String),

    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}: L={loss} L_RC={rc} L_U={user} L_I={item}")]
    Diverged {
        epoch: usize,
        batch: usize,
        loss: f64,
        rc: f64,
        user: f64,
        item: f64,
    },

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
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by missing/unreadable inputs or bad usage
    /// rather than by a computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Json(_) | Error::Csv(_) | Error::Lexicon { .. } | Error::Checkpoint(_)
        )
    }
}
