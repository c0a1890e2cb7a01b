use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable or invalid configuration.
    #[error("usage error: {0}")]
    Usage(String),
    /// Solver, instance or verification failure.
    #[error("computation failed: {0}")]
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Compute(_) => 2,
        }
    }
}

impl From<postprice::Error> for CliError {
    fn from(e: postprice::Error) -> Self {
        CliError::Compute(e.to_string())
    }
}

pub fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Compute(format!("{}: {e}", path.display()))
}
