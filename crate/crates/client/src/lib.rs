//! Agent-side SDK.
//!
//! * [`AgentIdentity`]: keys, chain and capability secrets, with local storage
//! * [`RegistryClient`]: the registry HTTP API
//! * [`handshake`]: mutual authentication over any [`Transport`]
//! * [`capability`]: challenge-bound capability checks inside a session

pub mod capability;
mod error;
pub mod handshake;
pub mod identity;
pub mod registry;
pub mod session;
pub mod transport;

pub use capability::{request_capability, serve_capability_request, Verdict};
pub use error::ClientError;
pub use handshake::{initiate, respond, Session, DEFAULT_HANDSHAKE_TIMEOUT};
pub use identity::AgentIdentity;
pub use registry::{discover, register_with, RegistryClient};
pub use transport::{loopback_pair, Loopback, TcpTransport, Transport};
