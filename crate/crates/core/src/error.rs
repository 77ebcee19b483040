use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("corrupt file {path}: {msg}")]
    Corrupt { path: PathBuf, msg: String },

    #[error("non-finite value at row {row}, col {col} (flat index {index})")]
    NonFinite { row: usize, col: usize, index: usize },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("degenerate solution: design has {null_dim} null dimension(s) and lambda = 0")]
    Degenerate { null_dim: usize },

    #[error("coordinate descent did not converge (final max delta {delta:e})")]
    NotConverged { delta: f64 },

    #[error("degenerate paired test: all differences equal {mean} (zero spread)")]
    DegenerateTest { mean: f64 },

    #[error("undefined correlation: zero variance input")]
    UndefinedCorrelation,

    #[error("training diverged at step {step}: {msg}")]
    Training { step: usize, msg: String },

    #[error("config invalid:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }

    /// Process exit code: 2 for bad input/config, 3 for runtime or numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Format { .. }
            | Error::Corrupt { .. }
            | Error::NonFinite { .. }
            | Error::Validation(_)
            | Error::Index(_)
            | Error::Shape(_)
            | Error::Domain(_)
            | Error::Argument(_)
            | Error::Config(_)
            | Error::Json { .. } => 2,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}
