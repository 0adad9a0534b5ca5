//! The authoritative agent registry.
//!
//! Writers (register, renew, revoke) are serialized by a single writer lock
//! and totally ordered by event sequence number; each event is appended to
//! the log before it becomes visible. Readers take a shared lock on the state
//! only, so they never wait on disk I/O and always observe a post-event state.

mod log;
mod state;

use std::path::Path;
use std::time::{Duration, Instant};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::attestation::CapabilityCommitment;
use crate::canonical;
use crate::error::ErrorCode;
use crate::identity::{validate_chain, CertificateChain, ChainError, Did, KeyPair, Signature, Timestamp, TrustAnchors};
use crate::name::{AnsName, Label, NameQuery};
use crate::policy::{evaluate, EvaluationContext, Phase, Policy, PolicyDecision};

pub use log::{recover, recover_from_files, write_snapshot, EventLog, LogCorrupt, RecoveryError};
pub use state::{
    order_records, AgentRecord, ApplyError, EventKind, RecordStatus, RegistryEvent, RegistryState, Snapshot,
};

pub const DEFAULT_RECORD_TTL: i64 = 24 * 3_600;
/// Accepted clock skew for renew/revoke signatures.
pub const SIGNATURE_WINDOW: i64 = 300;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrationRequest {
    /// Canonical name text; parsed as the first validation step.
    pub name: String,
    pub did: Did,
    pub endpoint: String,
    pub chain: CertificateChain,
    pub commitments: Vec<CapabilityCommitment>,
    pub namespace: Label,
    pub request_signature: Signature,
}

impl RegistrationRequest {
    /// Builds and signs a request with the agent's identity key.
    pub fn signed(
        identity: &KeyPair,
        name: &AnsName,
        endpoint: impl Into<String>,
        chain: CertificateChain,
        namespace: Label,
    ) -> Self {
        let mut req = RegistrationRequest {
            name: name.to_string(),
            did: identity.did(),
            endpoint: endpoint.into(),
            commitments: chain.agent.capability_commitments.clone(),
            chain,
            namespace,
            request_signature: Signature([0; 64]),
        };
        req.request_signature = identity.sign(&req.signing_bytes());
        req
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut value = serde_json::to_value(self).expect("request serializes");
        if let serde_json::Value::Object(map) = &mut value {
            map.remove("request_signature");
        }
        canonical::to_canonical_bytes(&value)
    }
}

/// Bytes signed to renew or revoke `name` at time `at`.
pub fn lifecycle_message(action: &str, name: &AnsName, at: Timestamp) -> Vec<u8> {
    canonical::canonical_bytes_of(&json!({ "action": action, "at": at, "name": name }))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LifecycleRequest {
    pub at: Timestamp,
    pub signature: Signature,
}

impl LifecycleRequest {
    pub fn renew(keys: &KeyPair, name: &AnsName, at: Timestamp) -> Self {
        LifecycleRequest { at, signature: keys.sign(&lifecycle_message("renew", name, at)) }
    }

    pub fn revoke(keys: &KeyPair, name: &AnsName, at: Timestamp) -> Self {
        LifecycleRequest { at, signature: keys.sign(&lifecycle_message("revoke", name, at)) }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Revocation {
    pub name: AnsName,
    pub revoked_at: Timestamp,
    pub by: Did,
}

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("invalid name: {0}")]
    InvalidName(String),
    #[error("malformed request: {0}")]
    Malformed(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("bad signature: {0}")]
    BadSignature(String),
    #[error("name mismatch: {0}")]
    NameMismatch(String),
    #[error("commitments do not match the agent certificate")]
    CapabilityMismatch,
    #[error("policy denied registration")]
    PolicyDenied(PolicyDecision),
    #[error("{name} is already registered by {existing}")]
    DuplicateAgent { name: String, existing: Did },
    #[error("unknown agent {0}")]
    UnknownAgent(String),
    #[error("agent {0} is revoked")]
    Revoked(String),
    #[error("persistence failure: {0}")]
    Persistence(#[from] std::io::Error),
}

impl RegistryError {
    pub fn code(&self) -> ErrorCode {
        match self {
            RegistryError::InvalidName(_) => ErrorCode::InvalidName,
            RegistryError::Malformed(_) => ErrorCode::Malformed,
            RegistryError::Chain(e) => e.code(),
            RegistryError::BadSignature(_) => ErrorCode::BadSignature,
            RegistryError::NameMismatch(_) => ErrorCode::NameMismatch,
            RegistryError::CapabilityMismatch => ErrorCode::CapabilityMismatch,
            RegistryError::PolicyDenied(_) => ErrorCode::PolicyDenied,
            RegistryError::DuplicateAgent { .. } => ErrorCode::DuplicateAgent,
            RegistryError::UnknownAgent(_) => ErrorCode::UnknownAgent,
            RegistryError::Revoked(_) => ErrorCode::Revoked,
            RegistryError::Persistence(_) => ErrorCode::Internal,
        }
    }
}

fn validate_endpoint(endpoint: &str) -> Result<(), RegistryError> {
    let url = url::Url::parse(endpoint).map_err(|e| RegistryError::Malformed(format!("endpoint `{endpoint}`: {e}")))?;
    if url.host_str().is_none_or(str::is_empty) {
        return Err(RegistryError::Malformed(format!("endpoint `{endpoint}` has no host")));
    }
    Ok(())
}

/// Per-stage durations of a registration. A stage that did not run is `None`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StageTimings {
    pub chain_validation: Option<Duration>,
    pub policy_eval: Option<Duration>,
}

#[derive(Clone, Copy, Debug)]
pub struct RegistryConfig {
    pub record_ttl: i64,
}

impl Default for RegistryConfig {
    fn default() -> Self {
        RegistryConfig { record_ttl: DEFAULT_RECORD_TTL }
    }
}

pub struct Registry {
    config: RegistryConfig,
    state: RwLock<RegistryState>,
    writer: Mutex<Option<EventLog>>,
}

impl Registry {
    /// In-memory registry with no persistence.
    pub fn new(config: RegistryConfig) -> Self {
        Registry::with_state(config, RegistryState::default(), None)
    }

    pub fn with_state(config: RegistryConfig, state: RegistryState, log: Option<EventLog>) -> Self {
        Registry { config, state: RwLock::new(state), writer: Mutex::new(log) }
    }

    /// Recovers from `snapshot` + `log` and keeps appending to `log`.
    pub fn open(config: RegistryConfig, log_path: &Path, snapshot_path: Option<&Path>, fsync: bool) -> Result<Self, OpenError> {
        let state = recover_from_files(snapshot_path, Some(log_path))?;
        let log = EventLog::open(log_path, fsync)?;
        Ok(Registry::with_state(config, state, Some(log)))
    }

    pub fn config(&self) -> RegistryConfig {
        self.config
    }

    fn commit(&self, log: &mut Option<EventLog>, at: Timestamp, kind: EventKind) -> Result<(), RegistryError> {
        let event = RegistryEvent { seq: self.state.read().last_seq() + 1, at, kind };
        if let Some(log) = log.as_mut() {
            log.append(&event)?;
        }
        self.state.write().apply(&event).expect("writer lock guarantees the next seq");
        Ok(())
    }

    /// Validation order: name, endpoint, chain, request signature,
    /// name/certificate consistency, admission policy, uniqueness.
    pub fn register(
        &self,
        req: &RegistrationRequest,
        policies: &[Policy],
        anchors: &TrustAnchors,
        now: Timestamp,
    ) -> Result<AgentRecord, RegistryError> {
        self.register_timed(req, policies, anchors, now, &mut StageTimings::default())
    }

    /// [`Registry::register`], recording how long the chain and policy
    /// stages took.
    pub fn register_timed(
        &self,
        req: &RegistrationRequest,
        policies: &[Policy],
        anchors: &TrustAnchors,
        now: Timestamp,
        timings: &mut StageTimings,
    ) -> Result<AgentRecord, RegistryError> {
        let name = AnsName::parse(&req.name).map_err(|e| RegistryError::InvalidName(e.to_string()))?;
        validate_endpoint(&req.endpoint)?;
        let started = Instant::now();
        let chain_result = validate_chain(&req.chain, anchors, now);
        timings.chain_validation = Some(started.elapsed());
        chain_result?;
        if !req.chain.agent.public_key.verify(&req.signing_bytes(), &req.request_signature) {
            return Err(RegistryError::BadSignature("request signature does not verify under the agent key".into()));
        }
        if req.chain.agent.subject_name.as_ref() != Some(&name) {
            return Err(RegistryError::NameMismatch(format!("certificate subject is not {name}")));
        }
        if req.did != req.chain.agent.subject_did {
            return Err(RegistryError::NameMismatch("DID does not match the agent certificate".into()));
        }
        if req.commitments != req.chain.agent.capability_commitments {
            return Err(RegistryError::CapabilityMismatch);
        }

        let record = AgentRecord {
            name: name.clone(),
            did: req.did.clone(),
            endpoint: req.endpoint.clone(),
            chain: req.chain.clone(),
            commitments: req.commitments.clone(),
            namespace: req.namespace.clone(),
            registered_at: now,
            expires_at: now + self.config.record_ttl,
            status: RecordStatus::Active,
        };
        let subject = record.policy_subject();
        let started = Instant::now();
        let decision = evaluate(&EvaluationContext { subject: &subject, phase: Phase::Admission, now }, policies);
        timings.policy_eval = Some(started.elapsed());
        if !decision.allowed {
            return Err(RegistryError::PolicyDenied(decision));
        }

        let mut writer = self.writer.lock();
        if let Some(existing) = self.state.read().get(&req.name) {
            if existing.is_live(now) && existing.did != record.did {
                return Err(RegistryError::DuplicateAgent { name: req.name.clone(), existing: existing.did.clone() });
            }
        }
        self.commit(&mut writer, now, EventKind::Registered(Box::new(record.clone())))?;
        Ok(record)
    }

    pub fn renew(&self, name: &str, req: &LifecycleRequest, now: Timestamp) -> Result<AgentRecord, RegistryError> {
        let mut writer = self.writer.lock();
        let record = self.state.read().get(name).cloned().ok_or_else(|| RegistryError::UnknownAgent(name.into()))?;
        if record.status == RecordStatus::Active && now > record.expires_at {
            return Err(RegistryError::UnknownAgent(name.into()));
        }
        if (req.at - now).abs() > SIGNATURE_WINDOW {
            return Err(RegistryError::BadSignature("renewal timestamp outside the accepted window".into()));
        }
        if !record.chain.agent.public_key.verify(&lifecycle_message("renew", &record.name, req.at), &req.signature) {
            return Err(RegistryError::BadSignature("renewal not signed by the agent key".into()));
        }
        if record.status == RecordStatus::Revoked {
            return Err(RegistryError::Revoked(name.into()));
        }
        let expires_at = (now + self.config.record_ttl).max(record.expires_at);
        self.commit(&mut writer, now, EventKind::Renewed { name: record.name.clone(), expires_at })?;
        Ok(AgentRecord { expires_at, ..record })
    }

    /// Accepts a signature by the agent itself or by its issuing
    /// intermediate or root.
    pub fn revoke(&self, name: &str, req: &LifecycleRequest, now: Timestamp) -> Result<Revocation, RegistryError> {
        let mut writer = self.writer.lock();
        let record = self.state.read().get(name).cloned().ok_or_else(|| RegistryError::UnknownAgent(name.into()))?;
        if (req.at - now).abs() > SIGNATURE_WINDOW {
            return Err(RegistryError::BadSignature("revocation timestamp outside the accepted window".into()));
        }
        let message = lifecycle_message("revoke", &record.name, req.at);
        let chain = &record.chain;
        let signer = [&chain.agent, &chain.intermediate, &chain.root]
            .into_iter()
            .find(|cert| cert.public_key.verify(&message, &req.signature))
            .ok_or_else(|| RegistryError::BadSignature("revocation not signed by the agent or its issuers".into()))?;
        let by = signer.subject_did.clone();
        if record.status == RecordStatus::Active {
            self.commit(&mut writer, now, EventKind::Revoked { name: record.name.clone(), by: by.clone() })?;
        }
        Ok(Revocation { name: record.name, revoked_at: now, by })
    }

    pub fn resolve(&self, query: &NameQuery, policies: &[Policy], now: Timestamp) -> Vec<AgentRecord> {
        self.state.read().resolve(query, policies, now)
    }

    pub fn get(&self, name: &str) -> Option<AgentRecord> {
        self.state.read().get(name).cloned()
    }

    /// Records that are active and unexpired at `now`.
    pub fn live_records(&self, now: Timestamp) -> Vec<AgentRecord> {
        self.state.read().records().filter(|r| r.is_live(now)).cloned().collect()
    }

    pub fn sweep_expired(&self, now: Timestamp) -> usize {
        let _writer = self.writer.lock();
        self.state.write().sweep_expired(now)
    }

    pub fn snapshot(&self) -> Snapshot {
        self.state.read().snapshot()
    }

    /// Snapshot taken under the writer lock so it matches a log prefix.
    pub fn write_snapshot(&self, path: &Path) -> std::io::Result<u64> {
        let _writer = self.writer.lock();
        let snapshot = self.state.read().snapshot();
        write_snapshot(path, &snapshot)?;
        Ok(snapshot.last_seq)
    }

    pub fn last_seq(&self) -> u64 {
        self.state.read().last_seq()
    }

    pub fn audit_index(&self) -> bool {
        self.state.read().audit_index()
    }

    /// Runs `f` against a consistent view of the state.
    pub fn read_state<R>(&self, f: impl FnOnce(&RegistryState) -> R) -> R {
        f(&self.state.read())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OpenError {
    #[error(transparent)]
    Recovery(#[from] RecoveryError),
    #[error("cannot open event log: {0}")]
    Io(#[from] std::io::Error),
}

impl OpenError {
    pub fn code(&self) -> ErrorCode {
        match self {
            OpenError::Recovery(_) => ErrorCode::LogCorrupt,
            OpenError::Io(_) => ErrorCode::Internal,
        }
    }
}
