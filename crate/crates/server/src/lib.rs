//! HTTP/JSON front end for the agent registry.
//!
//! | method | path | body | success |
//! |---|---|---|---|
//! | POST | `/v1/agents` | `RegistrationRequest` | 201 `AgentRecord` |
//! | POST | `/v1/agents/{name}/renew` | `LifecycleRequest` | 200 `AgentRecord` |
//! | DELETE | `/v1/agents/{name}` | `LifecycleRequest` | 200 `RevokeResponse` |
//! | GET | `/v1/resolve?capability=&provider=&protocol=&env=&agent=&version=` | | 200 `[AgentRecord]` |
//! | POST | `/v1/challenge` | `ChallengeRequest` | 200 `Challenge` |
//! | POST | `/v1/attest` | `CapabilityProof` | 200 `AttestResponse` |
//! | POST | `/v1/admission/validate` | `AgentManifest` | 200 `AdmissionDecision` |
//! | GET | `/v1/metrics` | | 200 text |
//! | GET | `/v1/healthz` | | 200 `ok` |
//!
//! Errors are `ApiError` bodies whose status follows the error code.

pub mod alerts;
pub mod app;
pub mod config;
pub mod metrics;
pub mod serve;

pub use alerts::{evaluate_alerts, Alert, AlertConfig};
pub use app::{router, system_clock, AppState, Clock};
pub use config::ServerConfig;
pub use metrics::{Metrics, MetricsSnapshot, Operation};
pub use serve::{serve, serve_state, ServeError, ServeOptions, ServerHandle};
