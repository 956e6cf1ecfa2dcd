use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("row {row}: timestamp {timestamp} does not follow {previous}")]
    Ordering {
        row: usize,
        timestamp: i64,
        previous: i64,
    },

    #[error("no samples")]
    NoSamples,

    #[error("empty after cleaning")]
    EmptyAfterCleaning,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("non-finite value at timestep {timestep} in {context}")]
    NonFinite { context: &'static str, timestep: usize },

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("trace has no occupancy labels")]
    MissingLabels,

    #[error("gradient check failed: relative error {max_rel_error:e} at {worst}")]
    GradCheck { max_rel_error: f64, worst: String },

    #[error("AUC undefined: labels contain a single class")]
    AucUndefined,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(message: impl Into<String>) -> Self {
        Error::Config(message.into())
    }

    /// Process exit code: 2 usage/config, 3 data, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Checkpoint(_) | Error::Json(_) => 2,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Ordering { .. }
            | Error::NoSamples
            | Error::EmptyAfterCleaning
            | Error::LengthMismatch { .. }
            | Error::MissingLabels
            | Error::AucUndefined => 3,
            Error::NonFinite { .. } | Error::Diverged { .. } | Error::GradCheck { .. } => 4,
        }
    }
}
