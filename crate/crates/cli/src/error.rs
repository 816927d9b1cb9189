use aqa_core::Error as CoreError;
use thiserror::Error;

/// Process exit status per error class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Other = 1,
    /// Bad flags or configuration.
    Usage = 2,
    /// A prerequisite artifact (checkpoint, manifest) is missing.
    MissingDependency = 3,
    /// Malformed or inconsistent input data.
    Data = 4,
    /// Training produced a non-finite loss or gradient.
    Divergence = 5,
    /// Corrupt checkpoint, or one produced under a different configuration.
    Checkpoint = 6,
}

impl ExitKind {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ExitKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ExitKind::Usage, message)
    }

    pub fn missing(message: impl Into<String>) -> Self {
        Self::new(ExitKind::MissingDependency, message)
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let kind = match &e {
            CoreError::Config(_) | CoreError::Mode(_) => ExitKind::Usage,
            CoreError::Parse { .. }
            | CoreError::Shape { .. }
            | CoreError::Alignment { .. }
            | CoreError::EmptyInput(_)
            | CoreError::Io { .. }
            | CoreError::Registry(_)
            | CoreError::Pairing(_)
            | CoreError::Balancing(_)
            | CoreError::Index { .. } => ExitKind::Data,
            CoreError::Divergence { .. } | CoreError::NonFiniteGradient { .. } => ExitKind::Divergence,
            CoreError::Checkpoint(_) => ExitKind::Checkpoint,
            CoreError::State(_) | CoreError::UndefinedCorrelation(_) => ExitKind::Other,
        };
        Self::new(kind, e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
