use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrafficError {
    #[error("line {line_no}: malformed record: {cause}")]
    MalformedRecord { line_no: usize, cause: String },
    #[error("unparsable request line: {0:?}")]
    UnparsableRequest(String),
    #[error("session {session_id:?} has more than one event with seq {seq}")]
    DuplicateSeq { session_id: String, seq: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IndexError {
    #[error("session id {0:?} appears in more than one trace")]
    DuplicateSessionId(String),
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u64),
    #[error("corrupt model: {0}")]
    CorruptModel(String),
    #[error("threshold must be at least 1, got {0}")]
    InvalidThreshold(u64),
}

#[derive(Debug, Error, PartialEq)]
pub enum SimulationError {
    #[error("attack rate must lie in [0, 1], got {0}")]
    InvalidRate(f64),
    #[error("cannot inject attacks into an empty corpus")]
    EmptyCorpus,
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
}
