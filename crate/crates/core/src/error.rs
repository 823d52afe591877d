use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("illegal action {action}: {rule}")]
    IllegalAction { action: String, rule: String },
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("state not found in enumerated state space")]
    UnknownState,
    #[error("enumeration exceeded limit of {0} states")]
    StateLimit(usize),
    #[error("invalid fragment vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("arithmetic overflow while computing {0}")]
    Overflow(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
