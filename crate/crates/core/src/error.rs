use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// The request exceeds a configured memory or work budget.
    #[error("resource limit: {0}")]
    Resource(String),
    /// The request is valid but beyond the scale this path supports.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// A sampled prefix is too short to decide the query.
    #[error("prefix too short: {0}")]
    InsufficientPrefix(String),
    /// An internal consistency check failed.
    #[error("integrity error: {0}")]
    Integrity(String),
    /// Table construction could not meet its accuracy target.
    #[error("construction error: {0}")]
    Construction(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn resource(msg: impl Into<String>) -> Self {
        Error::Resource(msg.into())
    }
}
