//! Capability attestation by signature-based proof of knowledge.
//!
//! Each capability an agent holds is backed by a dedicated key pair. The
//! public half (the *commitment*) is embedded in the agent certificate; the
//! secret half never leaves the agent. To prove a capability the agent signs a
//! verifier-issued nonce with the capability key, then countersigns the whole
//! proof with its identity key so that proofs cannot be relayed by another
//! agent holding the same commitment.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use parking_lot::Mutex;
use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::canonical::{self, hex_array};
use crate::error::ErrorCode;
use crate::identity::{validate_chain, CertificateChain, KeyPair, PublicKey, Signature, Timestamp, TrustAnchors};
use crate::name::{AnsName, Label};

pub const DEFAULT_CHALLENGE_TTL: i64 = 60;
pub const DEFAULT_CHALLENGE_CAPACITY: usize = 100_000;

/// Public value stored in certificates and registry records.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CapabilityCommitment {
    pub capability: Label,
    pub commitment_key: PublicKey,
}

/// Agent-local secret backing one capability. Deliberately not `Serialize`.
#[derive(Clone)]
pub struct CapabilitySecret {
    pub capability: Label,
    keypair: KeyPair,
}

impl CapabilitySecret {
    pub fn from_seed(capability: Label, seed: [u8; 32]) -> Self {
        CapabilitySecret { capability, keypair: KeyPair::from_seed(seed) }
    }

    pub fn commitment(&self) -> CapabilityCommitment {
        CapabilityCommitment { capability: self.capability.clone(), commitment_key: self.keypair.public_key() }
    }

    /// Secret seed, for local key storage only.
    pub fn seed(&self) -> [u8; 32] {
        self.keypair.seed()
    }
}

impl fmt::Debug for CapabilitySecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CapabilitySecret").field("capability", &self.capability).finish_non_exhaustive()
    }
}

pub fn create_capability(capability: Label) -> (CapabilitySecret, CapabilityCommitment) {
    let secret = CapabilitySecret { capability, keypair: KeyPair::generate() };
    let commitment = secret.commitment();
    (secret, commitment)
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Nonce(#[serde(with = "hex_array")] pub [u8; 32]);

impl Nonce {
    pub fn random() -> Self {
        let mut bytes = [0u8; 32];
        OsRng.fill_bytes(&mut bytes);
        Nonce(bytes)
    }
}

impl fmt::Debug for Nonce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Nonce({})", hex::encode(&self.0[..8]))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Challenge {
    pub nonce: Nonce,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
    pub audience: AnsName,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapabilityProof {
    pub agent_name: AnsName,
    pub capability: Label,
    pub nonce: Nonce,
    pub capability_signature: Signature,
    pub identity_signature: Signature,
}

impl CapabilityProof {
    fn capability_message(agent_name: &AnsName, capability: &Label, nonce: &Nonce) -> Vec<u8> {
        canonical::canonical_bytes_of(&json!({
            "agent_name": agent_name,
            "capability": capability,
            "nonce": nonce,
        }))
    }

    fn identity_message(&self) -> Vec<u8> {
        canonical::canonical_bytes_of(&json!({
            "agent_name": self.agent_name,
            "capability": self.capability,
            "nonce": self.nonce,
            "capability_signature": self.capability_signature,
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AttestationError {
    #[error("{0}")]
    Chain(#[from] crate::identity::ChainError),
    #[error("proof is for `{proof}` but the commitment is for `{commitment}`")]
    CapabilityMismatch { proof: Label, commitment: Label },
    #[error("no commitment for capability `{0}`")]
    UnknownCapability(Label),
    #[error("proof names {proof} but the certificate is for {certificate}")]
    NameMismatch { proof: String, certificate: String },
    #[error("{0} signature does not verify")]
    BadSignature(&'static str),
    #[error("nonce is not an outstanding challenge")]
    NonceReplay,
    #[error("challenge expired at {0}")]
    ChallengeExpired(Timestamp),
}

impl AttestationError {
    pub fn code(&self) -> ErrorCode {
        match self {
            AttestationError::Chain(e) => e.code(),
            AttestationError::CapabilityMismatch { .. } => ErrorCode::CapabilityMismatch,
            AttestationError::UnknownCapability(_) => ErrorCode::UnknownCapability,
            AttestationError::NameMismatch { .. } => ErrorCode::NameMismatch,
            AttestationError::BadSignature(_) => ErrorCode::BadSignature,
            AttestationError::NonceReplay => ErrorCode::NonceReplay,
            AttestationError::ChallengeExpired(_) => ErrorCode::ChallengeExpired,
        }
    }
}

/// Signs `challenge` with the capability secret and the identity key.
pub fn prove(
    challenge: &Challenge,
    secret: &CapabilitySecret,
    identity: &KeyPair,
    agent_name: &AnsName,
    now: Timestamp,
) -> Result<CapabilityProof, AttestationError> {
    if now > challenge.expires_at {
        return Err(AttestationError::ChallengeExpired(challenge.expires_at));
    }
    let message = CapabilityProof::capability_message(agent_name, &secret.capability, &challenge.nonce);
    let mut proof = CapabilityProof {
        agent_name: agent_name.clone(),
        capability: secret.capability.clone(),
        nonce: challenge.nonce,
        capability_signature: secret.keypair.sign(&message),
        identity_signature: Signature([0; 64]),
    };
    proof.identity_signature = identity.sign(&proof.identity_message());
    Ok(proof)
}

/// Checks everything except nonce freshness: the chain, the capability
/// binding and both signatures.
pub fn verify_proof_signatures(
    proof: &CapabilityProof,
    commitment: &CapabilityCommitment,
    agent_chain: &CertificateChain,
    anchors: &TrustAnchors,
    now: Timestamp,
) -> Result<(), AttestationError> {
    validate_chain(agent_chain, anchors, now)?;
    if agent_chain.agent.subject_name.as_ref() != Some(&proof.agent_name) {
        return Err(AttestationError::NameMismatch {
            proof: proof.agent_name.to_string(),
            certificate: agent_chain.agent.subject_name.as_ref().map(|n| n.to_string()).unwrap_or_default(),
        });
    }
    if proof.capability != commitment.capability {
        return Err(AttestationError::CapabilityMismatch {
            proof: proof.capability.clone(),
            commitment: commitment.capability.clone(),
        });
    }
    let message = CapabilityProof::capability_message(&proof.agent_name, &proof.capability, &proof.nonce);
    if !commitment.commitment_key.verify(&message, &proof.capability_signature) {
        return Err(AttestationError::BadSignature("capability"));
    }
    if !agent_chain.agent.public_key.verify(&proof.identity_message(), &proof.identity_signature) {
        return Err(AttestationError::BadSignature("identity"));
    }
    Ok(())
}

/// Full verification. On success the challenge nonce is consumed, so the
/// same proof is never accepted twice.
pub fn verify(
    proof: &CapabilityProof,
    commitment: &CapabilityCommitment,
    agent_chain: &CertificateChain,
    anchors: &TrustAnchors,
    store: &ChallengeStore,
    now: Timestamp,
) -> Result<(), AttestationError> {
    verify_proof_signatures(proof, commitment, agent_chain, anchors, now)?;
    store.consume(&proof.nonce, &proof.agent_name, now)?;
    Ok(())
}

#[derive(Default)]
struct StoreInner {
    outstanding: HashMap<[u8; 32], Challenge>,
    // issue order; equals expiry order because the TTL is fixed
    order: VecDeque<[u8; 32]>,
}

/// Outstanding challenges keyed by nonce, with single-use consumption.
pub struct ChallengeStore {
    ttl: i64,
    capacity: usize,
    inner: Mutex<StoreInner>,
}

impl Default for ChallengeStore {
    fn default() -> Self {
        ChallengeStore::new(DEFAULT_CHALLENGE_TTL, DEFAULT_CHALLENGE_CAPACITY)
    }
}

impl ChallengeStore {
    pub fn new(ttl_seconds: i64, capacity: usize) -> Self {
        assert!(capacity > 0, "challenge store capacity must be positive");
        ChallengeStore { ttl: ttl_seconds, capacity, inner: Mutex::new(StoreInner::default()) }
    }

    pub fn ttl(&self) -> i64 {
        self.ttl
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn issue(&self, audience: AnsName, now: Timestamp) -> Challenge {
        let challenge = Challenge { nonce: Nonce::random(), issued_at: now, expires_at: now + self.ttl, audience };
        let mut inner = self.inner.lock();
        Self::evict(&mut inner, self.capacity, now);
        inner.order.push_back(challenge.nonce.0);
        inner.outstanding.insert(challenge.nonce.0, challenge.clone());
        challenge
    }

    fn evict(inner: &mut StoreInner, capacity: usize, now: Timestamp) {
        while let Some(front) = inner.order.front().copied() {
            let expired_or_gone = inner.outstanding.get(&front).is_none_or(|c| now > c.expires_at);
            if expired_or_gone || inner.outstanding.len() >= capacity {
                inner.order.pop_front();
                inner.outstanding.remove(&front);
            } else {
                break;
            }
        }
        if inner.order.len() > capacity.saturating_mul(2) {
            let StoreInner { outstanding, order } = inner;
            order.retain(|n| outstanding.contains_key(n));
        }
    }

    /// Atomically removes the challenge for `nonce` if it was issued to
    /// `audience`. An expired challenge is removed and reported as such.
    pub fn consume(&self, nonce: &Nonce, audience: &AnsName, now: Timestamp) -> Result<Challenge, AttestationError> {
        let mut inner = self.inner.lock();
        match inner.outstanding.get(&nonce.0) {
            Some(c) if &c.audience == audience => {}
            _ => return Err(AttestationError::NonceReplay),
        }
        let challenge = inner.outstanding.remove(&nonce.0).expect("checked above");
        if now > challenge.expires_at {
            return Err(AttestationError::ChallengeExpired(challenge.expires_at));
        }
        Ok(challenge)
    }

    pub fn is_outstanding(&self, nonce: &Nonce) -> bool {
        self.inner.lock().outstanding.contains_key(&nonce.0)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().outstanding.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Debug for ChallengeStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChallengeStore").field("ttl", &self.ttl).field("outstanding", &self.len()).finish()
    }
}
