use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty operand")]
    EmptyOperand,

    #[error("empty request: sample count must be at least 1")]
    EmptyRequest,

    #[error("zero extent: all points coincide")]
    ZeroExtent,

    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),

    #[error("invalid transform: {0}")]
    InvalidTransform(String),

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("degenerate view direction")]
    DegenerateView,

    #[error("empty category `{0}`")]
    EmptyCategory(String),

    #[error("shape bank: {0}")]
    Bank(String),

    #[error("huber delta must be positive, got {0}")]
    InvalidDelta(f64),

    #[error("malformed point-cloud file: {0}")]
    CloudFormat(String),

    #[error("weights checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },

    #[error("weights dimension mismatch in layer {layer}: expected {expected:?}, found {found:?}")]
    DimMismatch {
        layer: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("malformed weights file: {0}")]
    WeightsFormat(String),

    #[error("config: {0}")]
    Config(String),

    #[error("oracle failed on sample {id}: {source}")]
    Oracle {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("dataset: {0}")]
    Dataset(String),

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
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that stem from user-supplied configuration rather
    /// than from a failure while running.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::InvalidDelta(_))
    }
}
