use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("validation error at row {row}: {message}")]
    Validation { row: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch} (learning rate {learning_rate})")]
    Divergence { epoch: usize, learning_rate: f64 },

    #[error("incompatible transfer: {0}")]
    IncompatibleTransfer(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("repetition with seed {seed} failed: {source}")]
    Repetition {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }

    /// Process exit code for the CLI: 2 config, 3 data, 4 divergence,
    /// 5 incompatible transfer.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 2,
            Error::Divergence { .. } => 4,
            Error::IncompatibleTransfer(_) => 5,
            Error::Repetition { source, .. } | Error::Stage { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}
