use thiserror::Error;

/// Errors raised by the friend-risk pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("mutual friends require two distinct nodes, got `{0}` twice")]
    SameNode(String),
    #[error("owner `{0}` has no friends; frequencies are undefined")]
    FriendlessOwner(String),
    #[error("invalid cluster count k={k} for {rows} rows")]
    InvalidClusterCount { k: usize, rows: usize },
    #[error("width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("model undefined: need at least 2 distinct labels, found {0}")]
    TooFewLabels(usize),
    #[error("rows belong to different owners (`{0}` vs `{1}`)")]
    OwnerMismatch(String, String),
    #[error("no stranger cluster assigned to ({user}, {stranger})")]
    MissingCluster { user: String, stranger: String },
    #[error("no friend cluster assigned to ({owner}, {friend})")]
    MissingFriendCluster { owner: String, friend: String },
    #[error("invalid thresholds: x={x}, y={y} (need 0 <= x < y)")]
    InvalidThresholds { x: f64, y: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{locus}: {message}")]
    Parse { locus: String, message: String },
    #[error("artifact version mismatch: file has {found}, this tool writes {expected}")]
    VersionMismatch { found: String, expected: String },
    #[error("infeasible synthetic configuration: {0}")]
    Infeasible(String),
    #[error("index mismatch: {0}")]
    IndexMismatch(String),
    #[error("duplicate label for ({user}, {stranger})")]
    DuplicateRecord { user: String, stranger: String },
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
    #[error("output directory is locked by another run: {0}")]
    Locked(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("config: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn parse(locus: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            locus: locus.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
