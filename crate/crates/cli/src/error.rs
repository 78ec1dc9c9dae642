use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or malformed input, bad configuration, unusable arguments.
    #[error("{0}")]
    Input(String),
    /// Warnings about degenerate data, promoted to failure by `--strict`.
    #[error("{} warning(s) under --strict: {}", .0.len(), .0.join("; "))]
    Degenerate(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Degenerate(_) => 2,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

macro_rules! input_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Input(e.to_string())
            }
        }
    )*};
}

input_from!(
    std::io::Error,
    crowdcal_core::CoreError,
    crowdcal_tracking::TrackingError,
    crowdcal_sim::SimError
);

pub fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Input(msg.into()))
}
