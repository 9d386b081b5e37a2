use std::path::{Path, PathBuf};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Usage = 2,
    Io = 3,
    Numeric = 4,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Core(#[from] pvseg_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        CliError::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        use pvseg_core::Error as E;
        match self {
            CliError::Usage(_) => ExitCode::Usage,
            CliError::Io { .. } | CliError::Format { .. } => ExitCode::Io,
            CliError::Numeric(_) | CliError::Core(E::NumericFailure(_)) => ExitCode::Numeric,
            CliError::Core(E::Config(_) | E::Scene(_) | E::Precondition(_)) => ExitCode::Usage,
            CliError::Core(_) => ExitCode::Io,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
