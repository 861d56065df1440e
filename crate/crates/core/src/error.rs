use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::{DataError, EmotionLabel, Split};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("batch normalization in train mode needs at least 2 rows, got {0}")]
    BatchTooSmall(usize),

    #[error("label index {0} is outside 0..7")]
    Label(usize),

    #[error("invalid {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("no training samples for class {0}")]
    MissingClass(EmotionLabel),

    #[error("the {0} split is empty")]
    EmptySplit(Split),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("input row {row} is not a probability vector (sum {sum})")]
    NotSimplex { row: usize, sum: f64 },

    #[error("missing modality: {0}")]
    MissingModality(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    Empty,

    #[error("model format version {found} is not supported (expected {expected})")]
    ModelVersion { found: u64, expected: u64 },

    #[error("corrupted model file: {0}")]
    ModelCorrupt(String),

    #[error("all {0} grid candidates failed")]
    AllCandidatesFailed(usize),

    #[error(transparent)]
    Data(#[from] DataError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(
        context: &'static str,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
