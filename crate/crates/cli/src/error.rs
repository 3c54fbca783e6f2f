use std::fmt;
use std::path::PathBuf;

use flowcap_core::Error as ModelError;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Exit status of the binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Validation = 1,
    Numerical = 2,
    ValidateFailed = 3,
}

/// Where in a config file a problem was found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Location {
    pub path: String,
    pub line: Option<usize>,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{l}", self.path),
            None => write!(f, "{}", self.path),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{at}: {message}")]
    Config { at: Location, message: String },

    #[error("{0}")]
    Invalid(String),

    #[error("{context}: {source}")]
    Model {
        context: String,
        #[source]
        source: ModelError,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("validation failed: {}", failed.join(", "))]
    ValidateFailed { failed: Vec<String> },
}

impl CliError {
    pub fn model(context: impl Into<String>, source: ModelError) -> Self {
        Self::Model {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            Self::Config { .. } | Self::Invalid(_) | Self::Io { .. } => ExitCode::Validation,
            Self::Model { source, .. } => model_exit_code(source),
            Self::ValidateFailed { .. } => ExitCode::ValidateFailed,
        }
    }
}

fn model_exit_code(e: &ModelError) -> ExitCode {
    match e {
        ModelError::InvalidGeometry(_)
        | ModelError::InvalidConfig(_)
        | ModelError::InvalidArgument(_)
        | ModelError::UnsupportedGeometry { .. }
        | ModelError::Unstable { .. }
        | ModelError::InfeasibleTarget { .. }
        | ModelError::UnknownPreset(_) => ExitCode::Validation,
        ModelError::Probe { source, .. } => model_exit_code(source),
        _ => ExitCode::Numerical,
    }
}
