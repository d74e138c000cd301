//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("boundary has not stopped (r={r}, a={a}, m={m})")]
    NotStopped { r: usize, a: usize, m: usize },

    #[error("invalid K={k} for m={m}: need 1 <= K <= m-1")]
    InvalidK { k: usize, m: usize },

    #[error("calibration failed: {0}")]
    CalibrationFailure(String),

    #[error("search failed: {0}")]
    SearchFailure(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("at stage {stage}: {source}")]
    AtStage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("replicate {index}: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_stage(self, stage: usize) -> Self {
        Error::AtStage { stage, source: Box::new(self) }
    }

    pub(crate) fn in_replicate(self, index: usize) -> Self {
        Error::Replicate { index, source: Box::new(self) }
    }

    /// Innermost error, peeling stage / replicate context.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStage { source, .. } | Error::Replicate { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
