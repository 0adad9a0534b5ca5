//! Core of the Agent Name Service trust layer.
//!
//! * [`name`]: hierarchical agent names and discovery queries
//! * [`identity`]: keys, DIDs, certificates and chain validation
//! * [`attestation`]: capability commitments and challenge-bound proofs
//! * [`policy`]: deny-by-default policy evaluation
//! * [`manifest`]: declarative agent manifests
//! * [`admission`]: manifest validation before deployment
//! * [`registry`]: the event-sourced agent registry
//! * [`wire`]: HTTP request and response bodies

pub mod admission;
pub mod attestation;
pub mod ca;
pub mod canonical;
pub mod error;
pub mod identity;
pub mod manifest;
pub mod name;
pub mod policy;
pub mod registry;
pub mod wire;

pub use attestation::{CapabilityCommitment, CapabilityProof, CapabilitySecret, Challenge, ChallengeStore, Nonce};
pub use ca::CertificateAuthority;
pub use error::ErrorCode;
pub use identity::{
    Certificate, CertificateChain, Did, KeyPair, PublicKey, Signature, Timestamp, TrustAnchors,
};
pub use manifest::AgentManifest;
pub use name::{AnsName, Label, NameQuery, Protocol, Version, VersionReq};
pub use policy::{Policy, PolicyDecision};
pub use registry::{AgentRecord, RegistrationRequest, Registry};
