use std::path::PathBuf;

use thiserror::Error;

use crate::env::MaskClause;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("parse error in {path}: line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("node id {id} out of range (instance has {len} nodes)")]
    NodeOutOfRange { id: usize, len: usize },

    #[error("illegal action {action} at node {position}: {clause}")]
    IllegalAction {
        action: usize,
        position: usize,
        clause: MaskClause,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("no legal action in non-terminal state at node {position}")]
    Deadlock { position: usize },

    #[error("instance too large for {solver}: {size} > {limit}")]
    SizeLimit {
        solver: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("instance is infeasible: {0}")]
    Infeasible(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("checkpoint format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },

    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("episode {episode}: {source}")]
    Episode {
        episode: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("toml: {0}")]
    Toml(String),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
