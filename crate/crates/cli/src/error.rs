use std::path::PathBuf;

use thiserror::Error;

/// Failures surfaced by the command-line front end. All map to exit code 1;
/// usage errors are reported by the argument parser with exit code 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{context}: {source}")]
    Core {
        context: &'static str,
        #[source]
        source: avrel_core::Error,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}, line {line}: {message}", path.display())]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("{}: {message}", path.display())]
    Json { path: PathBuf, message: String },

    #[error("{count} validation violation(s):\n{listing}")]
    Validation { count: usize, listing: String },

    #[error("{0}")]
    Invalid(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Attaches a module context to core errors.
pub trait Context<T> {
    fn context(self, context: &'static str) -> CliResult<T>;
}

impl<T> Context<T> for avrel_core::Result<T> {
    fn context(self, context: &'static str) -> CliResult<T> {
        self.map_err(|source| CliError::Core { context, source })
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        1
    }
}
