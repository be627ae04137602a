use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("self-loop rejected: entity `{0}` cannot relate to itself")]
    SelfLoop(String),

    #[error("label must not be empty")]
    EmptyLabel,

    #[error("unknown entity id {0}")]
    UnknownEntity(u32),

    #[error("unknown relation id {0}")]
    UnknownRelation(u32),

    #[error("graph has no entities")]
    EmptyGraph,

    #[error("hop order must be at least {min}, got {got}")]
    HopOrder { min: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("not enough {what}: requested {requested}, only {available} available")]
    Shortfall {
        what: String,
        requested: usize,
        available: usize,
    },

    #[error("no parseable lines ({} rejected)", .rejects.len())]
    NothingParsed { rejects: Vec<(usize, String)> },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("split is degenerate: {0}")]
    DegenerateSplit(String),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("{path}: {source}")]
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
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
