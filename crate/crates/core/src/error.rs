use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// Input data has the wrong shape for the requested operation.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// A linear system is singular or too ill-conditioned to trust.
    #[error("ill-conditioned system: {0}")]
    IllConditioned(String),
    /// A numerical routine did not converge.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by user-supplied configuration or input.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Dimension(_) | Error::Json(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
