use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{file}:{line}: {reason}")]
    MalformedRow {
        file: String,
        line: u64,
        reason: String,
    },

    #[error("{0}: no records")]
    NoRecords(String),

    #[error("exercise `{0}` appears in the log file but not in the Q-matrix")]
    UnknownExercise(String),

    #[error("Q-matrix row for exercise `{0}` has no concepts")]
    EmptyQRow(String),

    #[error("filtering removed all data")]
    FilteredEmpty,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite client loss {loss} from school {school}")]
    NonFiniteLoss { school: usize, loss: f64 },

    #[error("{0}")]
    UndefinedMetric(&'static str),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
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

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MalformedRow { .. } => "malformed_row",
            Error::NoRecords(_) => "no_records",
            Error::UnknownExercise(_) => "unknown_exercise",
            Error::EmptyQRow(_) => "empty_q_row",
            Error::FilteredEmpty => "filtered_empty",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::UndefinedMetric(_) => "undefined_metric",
            Error::Checkpoint(_) => "checkpoint",
            Error::Config { .. } => "config",
            Error::Stage { source, .. } => source.kind(),
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    /// Wraps an error with the pipeline stage that produced it.
    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
