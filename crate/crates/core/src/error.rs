use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the synonym discovery pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    IoContext {
        context: String,
        #[source]
        source: std::io::Error,
    },

    /// A record could not be decoded.
    #[error("line {line}: invalid field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    /// A record decoded but violates a structural invariant (dependency tree, mention spans).
    #[error("line {line}: sentence {doc_id}/{sent_id}: {message}")]
    Structure {
        line: usize,
        doc_id: String,
        sent_id: u64,
        message: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Sampling from an empty or all-zero distribution.
    #[error("cannot sample: {0}")]
    EmptyDistribution(String),

    #[error("not enough entities to split: {0}")]
    InsufficientEntities(String),

    #[error("no positive training patterns: {0}")]
    NoPositivePatterns(String),

    /// A parameter became non-finite during training.
    #[error("non-finite value after {part} step at iteration {iteration}")]
    NonFinite { part: &'static str, iteration: u64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("vocabulary hash mismatch: checkpoint has {expected:016x}, vocabulary has {actual:016x}")]
    VocabularyMismatch { expected: u64, actual: u64 },

    #[error("query: {0}")]
    Query(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
