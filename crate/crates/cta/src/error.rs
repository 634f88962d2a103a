//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CtaError>;

#[derive(Debug, Error)]
pub enum CtaError {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("invalid value for {name}: {message}")]
    InvalidValue { name: String, message: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("batch size {got} below the minimum of {min}; batch statistics need at least {min} samples per batch")]
    BatchTooSmall { got: usize, min: usize },

    #[error("model has no batch normalization layer; adapters require at least one")]
    NoBatchNormLayer,

    #[error("missing gradient for parameter {0}")]
    MissingGradient(String),

    #[error("unknown parameter {0}")]
    UnknownParameter(String),

    #[error("layer {index} ({kind}): {message}")]
    LayerCompose {
        index: usize,
        kind: String,
        message: String,
    },

    #[error("checkpoint version mismatch: file has {found}, this build reads {supported}")]
    CheckpointVersion { found: u16, supported: u16 },

    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    #[error("{path}: {message}")]
    DatasetLayout { path: String, message: String },

    #[error("config validation failed with {} violation(s):\n{}", .0.len(), .0.join("\n"))]
    ConfigInvalid(Vec<String>),

    #[error("{0}")]
    Protocol(String),

    #[error("checkpoint not found: expected {search_dir}/<timestamp>-<confighash>-train-source/model.ctab with source hash {source_hash} (run `cta train-source` with the same model and source config first)")]
    CheckpointMissing {
        search_dir: String,
        source_hash: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CtaError {
    pub fn shape(context: impl Into<String>, expected: impl ToString, actual: impl ToString) -> Self {
        CtaError::ShapeMismatch {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub fn invalid(name: impl Into<String>, message: impl Into<String>) -> Self {
        CtaError::InvalidValue {
            name: name.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CtaError::Io {
            path: path.into(),
            source,
        }
    }
}
