use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate rates: {0}")]
    DegenerateRates(String),
    #[error("no bracket for minimum: {0}")]
    NoBracket(String),
    #[error("search horizon of {steps} steps too small at stage {stage}, k={k}")]
    HorizonTooSmall { stage: usize, k: usize, steps: u32 },
    #[error("stationary system singular: {0}")]
    Singular(String),
    #[error("archive integrity check failed: {0}")]
    Integrity(String),
    #[error("archive version {found} not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
