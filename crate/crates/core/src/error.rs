use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// A hypothesis checked on a grid does not hold.
    #[error("precondition failed: {0}")]
    Precondition(String),
    /// The numerics could not produce a trustworthy answer.
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("reconstruction residual {residual:.3e} exceeds {tolerance:.1e} at t = {at}")]
    Reconstruction {
        residual: f64,
        tolerance: f64,
        at: f64,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn precondition(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}

pub(crate) fn numeric(msg: impl Into<String>) -> Error {
    Error::Numeric(msg.into())
}
