use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed XML at byte {position}: {message}")]
    Xml { position: u64, message: String },

    #[error("passage schema violation: {0}")]
    Schema(String),

    #[error("edge {from} -> {to} references unknown node {to}")]
    UnknownNode { from: String, to: String },

    #[error("unknown category {tag:?} on edge {from} -> {to}")]
    UnknownCategory { from: String, to: String, tag: String },

    #[error("cycle through unit {0}")]
    Cycle(String),

    #[error("duplicate terminal position {position} (node {id})")]
    DuplicateTerminal { id: String, position: usize },

    #[error("terminal positions are not contiguous: expected {expected}, found {found} (node {id})")]
    TerminalGap {
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("unit {unit} has {count} primary parents")]
    PrimaryParents { unit: String, count: usize },

    #[error("terminal {0} is not reachable from the root via primary edges")]
    UnreachableTerminal(String),

    #[error("implicit unit {0} has children or terminals")]
    ImplicitWithContent(String),

    #[error("unknown unit {0}")]
    UnknownUnit(String),

    #[error("null spans cannot be scored for overlap")]
    NullSpan,

    #[error("document id mismatch: {left} vs {right}")]
    DocMismatch { left: String, right: String },

    #[error("verdict references unit {0}, which is not a mention candidate")]
    VerdictUnknownUnit(String),

    #[error("verdict on unit {0} contradicts its automatic mention status")]
    VerdictOnAutoMention(String),

    #[error("coordination verdict references unit {0}, which has fewer than two Centers")]
    CoordinationUnknownUnit(String),

    #[error("multi-Center unit {0} is an automatic mention but has no coordination verdict")]
    MissingCoordinationVerdict(String),

    #[error("cluster assignment references unit {0}, which is not a mention")]
    ClusterUnknownMention(String),

    #[error("mention {unit} assigned to two referents ({first}, {second})")]
    ConflictingCluster {
        unit: String,
        first: String,
        second: String,
    },

    #[error("no candidate set or layer for passage {0}")]
    MissingLayer(String),

    #[error("threshold mu must lie in [0, 1], got {0}")]
    InvalidMu(String),

    #[error("unbalanced cluster bracket for cluster {cluster} at line {line}")]
    UnbalancedCluster { cluster: String, line: usize },

    #[error("token index {position} out of range (document has {limit} tokens)")]
    TokenOutOfRange { position: usize, limit: usize },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
