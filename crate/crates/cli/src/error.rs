use std::io;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, parameters or config.
    #[error("{0}")]
    Usage(String),
    /// Unreadable or malformed input data.
    #[error("{0}")]
    Data(String),
    /// The map or pose history broke one of its own invariants.
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    pub fn io(context: &str, err: io::Error) -> Self {
        CliError::Data(format!("{context}: {err}"))
    }
}

impl From<skimap::dump::DumpError> for CliError {
    fn from(e: skimap::dump::DumpError) -> Self {
        CliError::Data(e.to_string())
    }
}
