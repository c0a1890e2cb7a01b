use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("integration failed at y={y:.6}: {reason}")]
    Integration { y: f64, reason: String },

    #[error("bracket failure in {what}: {detail}")]
    Bracket { what: &'static str, detail: String },

    #[error("inconsistent construction: {0}")]
    Inconsistent(String),

    #[error("instance too large for exhaustive search: {n} agents (limit {limit})")]
    TooLarge { n: usize, limit: usize },

    #[error("slot {slot}: {source}")]
    Slot {
        slot: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
