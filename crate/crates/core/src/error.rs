use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("out-of-order edge: timestamp {got} is older than latest {latest}")]
    Monotonicity { latest: String, got: String },

    #[error("no features for node `{0}`")]
    MissingFeature(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("model is not trained")]
    Untrained,

    #[error("forest is in static mode; counters are frozen after initialization")]
    StaticMode,

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("unsupported {kind} format version {found} (expected {expected})")]
    Version {
        kind: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("edge {seq}: {source}")]
    Stream {
        seq: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input data rather than bugs or bad flags.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Monotonicity { .. }
            | Error::MissingFeature(_)
            | Error::Parse { .. }
            | Error::Version { .. }
            | Error::Io { .. }
            | Error::Json(_)
            | Error::Precondition(_)
            | Error::Divergence { .. }
            | Error::UndefinedMetric(_) => true,
            Error::Stream { source, .. } => source.is_data_error(),
            _ => false,
        }
    }
}
