//! Runner failures with stable upper-case codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("stage {stage} failed with {code}: {message}")]
    StageFailed { stage: String, code: String, message: String },
    #[error("runs are not comparable: {0}")]
    GridMismatch(String),
    #[error(transparent)]
    Io(#[from] levy_parametrix::error::IoError),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::ConfigInvalid(_) => "CONFIG_INVALID",
            CliError::StageFailed { .. } => "STAGE_FAILED",
            CliError::GridMismatch(_) => "GRID_MISMATCH",
            CliError::Io(_) => "IO_FAILED",
        }
    }

    /// Wrap a module error raised inside `stage`.
    pub fn stage(stage: &str, code: &str, err: impl std::fmt::Display) -> Self {
        CliError::StageFailed { stage: stage.to_string(), code: code.to_string(), message: err.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.into())
    }
}
