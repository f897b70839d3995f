use std::fmt;
use std::path::{Path, PathBuf};

/// Process exit statuses.
pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_INTERNAL: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Label,
    Train,
    Eval,
    Explain,
    Simulate,
    Stats,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Label => "label",
            Stage::Train => "train",
            Stage::Eval => "eval",
            Stage::Explain => "explain",
            Stage::Simulate => "simulate",
            Stage::Stats => "stats",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Usage,
    Data,
    Internal,
}

#[derive(Debug)]
pub struct CliError {
    pub stage: Stage,
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage.as_str(), self.message)
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn usage(stage: Stage, message: impl Into<String>) -> Self {
        CliError { stage, severity: Severity::Usage, message: message.into() }
    }

    pub fn data(stage: Stage, message: impl Into<String>) -> Self {
        CliError { stage, severity: Severity::Data, message: message.into() }
    }

    pub fn internal(stage: Stage, message: impl Into<String>) -> Self {
        CliError { stage, severity: Severity::Internal, message: message.into() }
    }

    /// Core failures are data problems unless they come from the
    /// filesystem or a diverging optimizer.
    pub fn core(stage: Stage, err: pnd_core::Error) -> Self {
        use pnd_core::Error as E;
        match err {
            E::Io(_) | E::NonFiniteLoss { .. } => CliError::internal(stage, err.to_string()),
            _ => CliError::data(stage, err.to_string()),
        }
    }

    /// A core failure while reading `path`; the path goes into the message.
    pub fn reading(stage: Stage, path: &Path, err: pnd_core::Error) -> Self {
        let message = format!("{}: {err}", path.display());
        match err {
            pnd_core::Error::Io(_) => CliError::data(stage, message),
            _ => CliError::core(stage, err).with_message(message),
        }
    }

    pub fn writing(stage: Stage, path: &Path, err: impl fmt::Display) -> Self {
        CliError::internal(stage, format!("cannot write {}: {err}", path.display()))
    }

    pub fn missing(stage: Stage, path: PathBuf) -> Self {
        CliError::data(stage, format!("input not found: {}", path.display()))
    }

    fn with_message(mut self, message: String) -> Self {
        self.message = message;
        self
    }

    pub fn exit_code(&self) -> u8 {
        match self.severity {
            Severity::Usage => EXIT_USAGE,
            Severity::Data => EXIT_DATA,
            Severity::Internal => EXIT_INTERNAL,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
