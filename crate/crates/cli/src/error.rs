use std::path::PathBuf;

use spinsense_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
    /// A diagnosis has already been printed; only the exit status remains.
    #[error("{0}")]
    Infeasible(String),
}

impl CliError {
    /// 0 success, 2 usage or config, 3 mathematical infeasibility, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 2,
            CliError::Infeasible(_) => 3,
            CliError::Core(e) => match e {
                CoreError::Domain(_) | CoreError::Truncation { .. } => 2,
                CoreError::Degenerate(_)
                | CoreError::NotFound { .. }
                | CoreError::Singular { .. }
                | CoreError::NonIdentifiable(_) => 3,
                CoreError::Numerical(_) | CoreError::Unreliable { .. } => 4,
            },
        }
    }
}
