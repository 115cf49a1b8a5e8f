use std::path::PathBuf;

use sunpair::Error as CoreError;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Invalid configuration or arguments; `path` names the offending field.
    #[error("{path}: {message}")]
    Config { path: String, message: String },

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl ToString) -> Self {
        CliError::Config {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 configuration/validation, 3 insufficient data, 4 I/O or parse.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Insufficient(_) => 3,
            CliError::Io { .. } | CliError::Parse { .. } => 4,
            CliError::Core(e) => match e {
                CoreError::InsufficientData(_) => 3,
                CoreError::Io { .. }
                | CoreError::Parse { .. }
                | CoreError::Csv { .. }
                | CoreError::Json(_)
                | CoreError::PreconditionViolation(_) => 4,
                CoreError::InvalidArgument(_) | CoreError::OutOfDomain(_) | CoreError::DegenerateBasis(_) => 2,
            },
        }
    }
}
