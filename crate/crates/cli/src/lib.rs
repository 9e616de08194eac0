//! Command implementations behind the `civet` binary.

mod evaluate;
mod generate;
mod replay;
mod report;
mod serve;

pub use evaluate::{EvaluateArgs, EvaluateSummary, cmd_evaluate, default_responses_path};
pub use generate::{GenerateConfig, GenerateSummary, RunRecord, cmd_generate, default_image_size, manifest_path};
pub use replay::{ReplayMode, cmd_make_replay};
pub use report::{ReportArgs, cmd_report};
pub use serve::cmd_serve;

use civet_annotate::AnnotateError;
use civet_harness::HarnessError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Input(_) => 3,
            CliError::Transport(_) => 4,
            CliError::Conflict(_) => 5,
            CliError::Io(_) => 1,
        }
    }
}

impl From<civet_core::Error> for CliError {
    fn from(e: civet_core::Error) -> Self {
        use civet_core::Error as E;
        match e {
            E::Config(m) => CliError::Config(m),
            E::Asset(_) => CliError::Config(e.to_string()),
            E::Io(io) => CliError::Io(io),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(m) => CliError::Config(m),
            HarnessError::Input(m) => CliError::Input(m),
            HarnessError::Io(io) => CliError::Io(io),
            HarnessError::Core(c) => c.into(),
        }
    }
}

impl From<AnnotateError> for CliError {
    fn from(e: AnnotateError) -> Self {
        match e {
            AnnotateError::Config(m) => CliError::Config(m),
            AnnotateError::Io(io) => CliError::Io(io),
            AnnotateError::Core(c) => c.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
