use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("negative timestamp {0}")]
    NegativeTime(f64),
    #[error("timestamps must strictly increase (t = {prev} followed by t = {next})")]
    NonIncreasingTime { prev: f64, next: f64 },
    #[error("trajectory needs at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("trajectory id {0:?} occurs more than once")]
    DuplicateId(String),
    #[error("rate must be positive, got {0}")]
    BadRate(f64),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
