use ans_core::wire::ApiError;
use ans_core::ErrorCode;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    /// The registry could not be reached or the connection failed.
    #[error("transport: {0}")]
    Transport(String),
    /// The registry answered with an error body.
    #[error("registry: {0}")]
    Api(ApiError),
    /// The registry answered with something that is not the expected body.
    #[error("unexpected response: {0}")]
    Decode(String),
    /// A peer exchange (handshake or capability check) failed.
    #[error("{code}: {message}")]
    Peer { code: ErrorCode, message: String },
    #[error("identity: {0}")]
    Identity(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ClientError {
    pub fn peer(code: ErrorCode, message: impl Into<String>) -> Self {
        ClientError::Peer { code, message: message.into() }
    }

    /// Error code, when the failure carries one.
    pub fn code(&self) -> Option<ErrorCode> {
        match self {
            ClientError::Api(e) => Some(e.error),
            ClientError::Peer { code, .. } => Some(*code),
            _ => None,
        }
    }

    pub fn is_transport(&self) -> bool {
        matches!(self, ClientError::Transport(_))
    }
}
