//! Crate-wide error type.

use std::path::PathBuf;

/// All fallible operations in the crate report this error.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("serialization error: {0}")]
    Serialize(String),

    #[error("invalid cluster set: {0}")]
    InvalidClusters(String),

    #[error("embedding load error in {path}: {msg}")]
    EmbeddingLoad { path: PathBuf, msg: String },

    #[error("embedding lookup failed for {key}")]
    EmbeddingLookup { key: String },

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: String,
        got: String,
        context: String,
    },

    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing external candidate mentions for document {doc_id} part {part_id}")]
    MissingCandidates { doc_id: String, part_id: usize },

    #[error("document sets do not match: {0}")]
    DocumentMismatch(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 for data problems, 3 for numeric ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension { .. } | Error::NonFinite { .. } => 3,
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
