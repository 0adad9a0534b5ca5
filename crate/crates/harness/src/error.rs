use ans_client::ClientError;
use ans_core::ErrorCode;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    /// An operation the workload expects to succeed did not.
    #[error("{operation} failed unexpectedly: {source}")]
    Unexpected {
        operation: String,
        #[source]
        source: ClientError,
    },
    #[error("could not start the registry: {0}")]
    Server(#[from] ans_server::ServeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("worker task failed: {0}")]
    Task(String),
}

impl HarnessError {
    pub fn unexpected(operation: impl Into<String>, source: ClientError) -> Self {
        HarnessError::Unexpected { operation: operation.into(), source }
    }

    pub fn code(&self) -> Option<ErrorCode> {
        match self {
            HarnessError::Unexpected { source, .. } => source.code(),
            HarnessError::Server(e) => Some(e.code()),
            _ => None,
        }
    }
}

impl From<ClientError> for HarnessError {
    fn from(e: ClientError) -> Self {
        HarnessError::unexpected("client setup", e)
    }
}
