use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrackingError {
    #[error("frame is {got_w}x{got_h} but intrinsics expect {want_w}x{want_h}")]
    DimensionMismatch { got_w: usize, got_h: usize, want_w: usize, want_h: usize },
    #[error("rigid fit needs at least 3 non-collinear matches: {0}")]
    Rank(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("frame timestamp {t} is not after the previous frame at {prev}")]
    TimeOrder { prev: f64, t: f64 },
    #[error("detection at t = {got} in a frame stamped t = {frame}")]
    MixedTimestamps { frame: f64, got: f64 },
    #[error("assignment matrix must be square with finite entries: {0}")]
    BadMatrix(String),
    #[error("bad depth frame data: {0}")]
    Format(String),
    #[error(transparent)]
    Core(#[from] crowdcal_core::CoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = TrackingError> = std::result::Result<T, E>;
