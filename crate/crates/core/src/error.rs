use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at {line}:{column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("expected a single top-level {expected} declaration, found {found}")]
    Granularity { expected: String, found: String },

    #[error("malformed {kind} node {node}: expected {expected} children, found {found}")]
    MalformedNode {
        node: usize,
        kind: &'static str,
        expected: &'static str,
        found: usize,
    },

    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("graph has no nodes")]
    EmptyGraph,

    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("dataset is empty: {0}")]
    EmptyDataset(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("validation set must contain both classes ({positives} positive, {negatives} negative)")]
    DegenerateValidation { positives: usize, negatives: usize },

    #[error("unknown fragment id `{0}`")]
    UnknownFragment(String),

    #[error("duplicate fragment id `{0}`")]
    DuplicateId(String),

    #[error("pair {index} has no clone-type tag")]
    MissingTypeTags { index: usize },

    #[error("length mismatch: {left} scores vs {right} labels")]
    LengthMismatch { left: usize, right: usize },

    #[error("ROC requires both classes, found only {0}")]
    SingleClass(&'static str),

    #[error("checkpoint holds a {found} model but {requested} was requested")]
    ModelKindMismatch { requested: String, found: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },

    #[error("I/O error on {path}: {source}")]
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

    pub(crate) fn format(path: impl std::fmt::Display, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.to_string(),
            message: message.into(),
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) | Error::ModelKindMismatch { .. } => 1,
            Error::ShapeMismatch { .. } | Error::NonFiniteLoss { .. } | Error::ZeroVector => 3,
            _ => 2,
        }
    }
}
