use thiserror::Error;

pub type Result<T> = std::result::Result<T, GawnoError>;

#[derive(Debug, Error)]
pub enum GawnoError {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("length error in {op}: {msg}")]
    Length { op: &'static str, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("index {index} out of range for {len} variables")]
    Index { index: usize, len: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("AUC undefined: {0}")]
    UndefinedAuc(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {what}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        what: &'static str,
    },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("checkpoint tensor `{name}` has shape {found:?}, expected {expected:?}")]
    CheckpointShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GawnoError {
    pub(crate) fn dim(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        GawnoError::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn length(op: &'static str, msg: impl Into<String>) -> Self {
        GawnoError::Length {
            op,
            msg: msg.into(),
        }
    }
}
