use std::path::PathBuf;
use std::process::ExitCode;

use ans_client::ClientError;
use ans_core::ErrorCode;

/// Exit status contract shared by every command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Operational = 1,
    Usage = 2,
    Denied = 3,
}

impl From<Exit> for ExitCode {
    fn from(e: Exit) -> Self {
        ExitCode::from(e as u8)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String, code: Option<ErrorCode> },
    #[error("{0}")]
    Client(#[from] ClientError),
    #[error("{code}: {message}")]
    Coded { code: ErrorCode, message: String },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn file(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        CliError::File { path: path.into(), message: message.to_string(), code: None }
    }

    pub fn code(&self) -> Option<ErrorCode> {
        match self {
            CliError::Client(e) => e.code(),
            CliError::Coded { code, .. } => Some(*code),
            CliError::File { code, .. } => *code,
            _ => None,
        }
    }

    /// Rejections by the trust layer (authentication or authorization) are
    /// denials; bad input is a usage error; everything else is operational.
    pub fn exit(&self) -> Exit {
        match self {
            CliError::Usage(_) => Exit::Usage,
            CliError::File { code: None, .. } | CliError::Other(_) => Exit::Operational,
            _ => match self.code().map(|c| c.http_status()) {
                Some(401 | 403) => Exit::Denied,
                Some(400) => Exit::Usage,
                _ => Exit::Operational,
            },
        }
    }
}
