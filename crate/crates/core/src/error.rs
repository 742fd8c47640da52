use std::path::PathBuf;

/// Errors raised across the labeling, training and evaluation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty document")]
    EmptyDocument,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("non-finite value produced by {0}")]
    NumericOverflow(&'static str),

    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(&'static str),

    #[error("joint-phase batch contains no labeled pairs")]
    EmptyClassification,

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
