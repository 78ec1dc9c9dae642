use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid parameter: {0}")]
    Params(String),
    #[error("invalid agent {id}: {msg}")]
    Agent { id: u32, msg: String },
    #[error("non-finite force on agent {id} at t = {t}")]
    NonFinite { id: u32, t: f64 },
    #[error("replay task {id} rejected: {msg}")]
    Task { id: String, msg: String },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Core(#[from] crowdcal_core::CoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
