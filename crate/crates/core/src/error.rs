//! Crate-wide error type. Variants carry enough context (file, row, stage
//! indices) for callers to report failures without re-deriving state.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: row {row}: {msg}")]
    Csv {
        path: String,
        row: usize,
        msg: String,
    },

    #[error("{path}: no data rows")]
    EmptySeries { path: String },

    #[error("timestamps must be strictly increasing (violated at position {position})")]
    NonMonotonicTimestamps { position: usize },

    #[error("invalid parameter {name}: {msg}")]
    InvalidParam { name: &'static str, msg: String },

    #[error("{context}: need at least {needed} points, got {got}")]
    TooFewPoints {
        context: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("validation split too small: {got} points past boundary, need at least 2")]
    ValidationTooSmall { got: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("labels required but absent: {0}")]
    LabelsMissing(String),

    #[error("all model variances are at the 0.25 ceiling; no usable model")]
    NoUsableModel,

    #[error("AUC undefined: need at least one positive and one negative label")]
    SingleClassLabels,

    #[error("model {model}, bootstrap {bootstrap}: {source}")]
    Stage {
        model: usize,
        bootstrap: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Annotates an error with the (model, bootstrap) grid cell it came from.
    pub fn at_stage(self, model: usize, bootstrap: usize) -> Error {
        Error::Stage {
            model,
            bootstrap,
            source: Box::new(self),
        }
    }

    pub(crate) fn invalid(name: &'static str, msg: impl Into<String>) -> Error {
        Error::InvalidParam {
            name,
            msg: msg.into(),
        }
    }
}
