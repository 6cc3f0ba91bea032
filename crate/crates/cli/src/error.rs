use std::path::PathBuf;

use seqcv::detection::DetectError;
use seqcv::{CvError, KernelError, LimitError, SimError, SmoothError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Bracket(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Io { .. } => 3,
            CliError::Numeric(_) => 4,
            CliError::Bracket(_) => 5,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "E_CONFIG",
            CliError::Data(_) => "E_DATA",
            CliError::Io { .. } => "E_IO",
            CliError::Numeric(_) => "E_NUMERIC",
            CliError::Bracket(_) => "E_BRACKET",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// `error[CODE]: message` on one line.
    pub fn render(&self) -> String {
        let text = self.to_string().replace(['\n', '\r'], " ");
        format!("error[{}]: {}", self.code(), text)
    }
}

impl From<KernelError> for CliError {
    fn from(e: KernelError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SmoothError> for CliError {
    fn from(e: SmoothError) -> Self {
        match e {
            SmoothError::InvalidBandwidth(_) => CliError::Config(e.to_string()),
            SmoothError::DegenerateWindow { .. } | SmoothError::NonFinite(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CvError> for CliError {
    fn from(e: CvError) -> Self {
        match e {
            CvError::Config(_) => CliError::Config(e.to_string()),
            CvError::Smooth(inner) => inner.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Scenario(_) | SimError::Model(_) => CliError::Config(e.to_string()),
            SimError::Series(inner) => inner.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DetectError> for CliError {
    fn from(e: DetectError) -> Self {
        match e {
            DetectError::Bracket { .. } => CliError::Bracket(e.to_string()),
            DetectError::Config(_) => CliError::Config(e.to_string()),
            DetectError::TooShort { .. } => CliError::Data(e.to_string()),
            DetectError::Smooth(inner) => inner.into(),
            DetectError::Cv(inner) => inner.into(),
            DetectError::Sim(inner) => inner.into(),
        }
    }
}

impl From<LimitError> for CliError {
    fn from(e: LimitError) -> Self {
        match e {
            LimitError::Degenerate { .. } => CliError::Numeric(e.to_string()),
            LimitError::Cv(inner) => inner.into(),
            LimitError::Sim(inner) => inner.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}
