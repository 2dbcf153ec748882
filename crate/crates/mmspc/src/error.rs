use std::io;
use std::path::PathBuf;

/// Errors of the std layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The scenario description is unusable.
    #[error("config: {0}")]
    Config(String),
    /// A simulation or analysis step failed.
    #[error(transparent)]
    Sim(#[from] mmspc_core::Error),
    /// File access failed.
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    /// CSV encoding or decoding failed.
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
}

impl Error {
    /// Process exit code for the command line: 2 for configuration problems,
    /// 3 for everything that goes wrong afterwards.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            _ => 3,
        }
    }
}

/// Result alias of the std layer.
pub type Result<T> = std::result::Result<T, Error>;
