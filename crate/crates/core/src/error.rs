use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("layer {layer} ({kind}): expected input shape {expected:?}, got {got:?}")]
    Composition {
        layer: usize,
        kind: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("tape is stale: recorded at parameter version {recorded}, network is at {current}")]
    StaleTape { recorded: u64, current: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint: unsupported format version {found} (this build reads up to {supported})")]
    CheckpointVersion { found: u16, supported: u16 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint: checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    Checksum { stored: u32, computed: u32 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{file} row {row}: {message}")]
    Schema {
        file: String,
        row: usize,
        message: String,
    },

    #[error("{file} row {row}: dangling reference: {message}")]
    DanglingReference {
        file: String,
        row: usize,
        message: String,
    },

    #[error("unknown {what}: {name}")]
    Unknown { what: &'static str, name: String },

    #[error("value {value} outside declared range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("image encoding: {0}")]
    Image(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("image geometry mismatch: expected side {expected}, got {got}")]
    Geometry { expected: usize, got: usize },

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }
}
