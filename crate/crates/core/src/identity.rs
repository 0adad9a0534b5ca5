//! Keys, DIDs and the fixed three-tier certificate hierarchy.
//!
//! A chain is always `agent -> intermediate -> root`. Certificates are signed
//! over their canonical serialization (see [`crate::canonical`]) with every
//! field except `signature`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::attestation::CapabilityCommitment;
use crate::canonical::{self, hex_array, hex_sig};
use crate::error::ErrorCode;
use crate::name::AnsName;

/// Unix time in whole seconds.
pub type Timestamp = i64;

pub const DAY_SECONDS: i64 = 86_400;
pub const DEFAULT_AGENT_VALIDITY: i64 = 90 * DAY_SECONDS;
pub const DEFAULT_INTERMEDIATE_VALIDITY: i64 = 365 * DAY_SECONDS;
pub const DEFAULT_ROOT_VALIDITY: i64 = 3_650 * DAY_SECONDS;

/// Current wall-clock time.
pub fn unix_now() -> Timestamp {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0)
}

/// Ed25519 public key.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PublicKey(#[serde(with = "hex_array")] pub [u8; 32]);

impl PublicKey {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn verify(&self, message: &[u8], signature: &Signature) -> bool {
        let Ok(key) = VerifyingKey::from_bytes(&self.0) else {
            return false;
        };
        let sig = ed25519_dalek::Signature::from_bytes(&signature.0);
        key.verify(message, &sig).is_ok()
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", hex::encode(self.0))
    }
}

/// Ed25519 signature.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Signature(#[serde(with = "hex_sig")] pub [u8; 64]);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", hex::encode(&self.0[..8]))
    }
}

/// Signing key pair. The secret half never implements `Serialize`.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
}

impl KeyPair {
    pub fn generate() -> Self {
        let mut seed = [0u8; 32];
        OsRng.fill_bytes(&mut seed);
        KeyPair::from_seed(seed)
    }

    pub fn from_seed(seed: [u8; 32]) -> Self {
        KeyPair { signing: SigningKey::from_bytes(&seed) }
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.signing.verifying_key().to_bytes())
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature(self.signing.sign(message).to_bytes())
    }

    /// Secret seed, for writing local key files only.
    pub fn seed(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn did(&self) -> Did {
        derive_did(&self.public_key())
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair").field("public_key", &self.public_key()).finish_non_exhaustive()
    }
}

/// Deterministic when `seed` is given; otherwise drawn from the OS RNG.
pub fn generate_keypair(seed: Option<[u8; 32]>) -> KeyPair {
    match seed {
        Some(seed) => KeyPair::from_seed(seed),
        None => KeyPair::generate(),
    }
}

const DID_PREFIX: &str = "did:ans:";

/// `did:ans:<base58(SHA-256(public key))>`
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Did(String);

impl Did {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

pub fn derive_did(public_key: &PublicKey) -> Did {
    let digest = Sha256::digest(public_key.as_bytes());
    Did(format!("{DID_PREFIX}{}", bs58::encode(digest).into_string()))
}

impl fmt::Display for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Did({})", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid DID `{0}`")]
pub struct InvalidDid(pub String);

impl FromStr for Did {
    type Err = InvalidDid;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let id = s.strip_prefix(DID_PREFIX).ok_or_else(|| InvalidDid(s.to_owned()))?;
        match bs58::decode(id).into_vec() {
            Ok(bytes) if bytes.len() == 32 => Ok(Did(s.to_owned())),
            _ => Err(InvalidDid(s.to_owned())),
        }
    }
}

impl Serialize for Did {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Did {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CertRole {
    Root,
    Intermediate,
    Agent,
}

impl fmt::Display for CertRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CertRole::Root => "root",
            CertRole::Intermediate => "intermediate",
            CertRole::Agent => "agent",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub serial: u64,
    pub subject_did: Did,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject_name: Option<AnsName>,
    pub issuer_did: Did,
    pub public_key: PublicKey,
    pub not_before: Timestamp,
    pub not_after: Timestamp,
    pub role: CertRole,
    #[serde(default)]
    pub capability_commitments: Vec<CapabilityCommitment>,
    pub signature: Signature,
}

impl Certificate {
    /// The bytes covered by `signature`.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut value = serde_json::to_value(self).expect("certificate serializes");
        if let serde_json::Value::Object(map) = &mut value {
            map.remove("signature");
        }
        canonical::to_canonical_bytes(&value)
    }

    /// The certificate file format: canonical text including the signature.
    pub fn to_canonical_string(&self) -> String {
        canonical::to_canonical_string(self)
    }

    pub fn verify_signature(&self, issuer_key: &PublicKey) -> bool {
        issuer_key.verify(&self.canonical_bytes(), &self.signature)
    }

    pub fn is_self_signed(&self) -> bool {
        self.issuer_did == self.subject_did
    }

    pub fn validity_seconds(&self) -> i64 {
        self.not_after - self.not_before
    }

    pub fn commitment_for(&self, capability: &str) -> Option<&CapabilityCommitment> {
        self.capability_commitments.iter().find(|c| c.capability == capability)
    }
}

/// Seconds until `cert` expires; negative once expired.
pub fn remaining_validity(cert: &Certificate, now: Timestamp) -> i64 {
    cert.not_after - now
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IssueError {
    #[error("role violation: {0}")]
    RoleViolation(String),
    #[error("subject validity [{not_before}, {not_after}] exceeds issuer window [{issuer_not_before}, {issuer_not_after}]")]
    WindowExceeded {
        not_before: Timestamp,
        not_after: Timestamp,
        issuer_not_before: Timestamp,
        issuer_not_after: Timestamp,
    },
    #[error("malformed certificate request: {0}")]
    Malformed(String),
}

impl IssueError {
    pub fn code(&self) -> ErrorCode {
        match self {
            IssueError::RoleViolation(_) => ErrorCode::RoleViolation,
            IssueError::WindowExceeded { .. } => ErrorCode::WindowExceeded,
            IssueError::Malformed(_) => ErrorCode::Malformed,
        }
    }
}

/// Who signs a new certificate.
#[derive(Clone, Copy, Debug)]
pub enum Issuer<'a> {
    /// Self-signed root.
    SelfSigned(&'a KeyPair),
    Authority { keys: &'a KeyPair, cert: &'a Certificate },
}

#[derive(Clone, Debug)]
pub struct CertificateRequest {
    /// Random when `None`.
    pub serial: Option<u64>,
    pub role: CertRole,
    pub subject_key: PublicKey,
    pub subject_name: Option<AnsName>,
    pub not_before: Timestamp,
    pub validity_seconds: i64,
    pub commitments: Vec<CapabilityCommitment>,
}

impl CertificateRequest {
    pub fn new(role: CertRole, subject_key: PublicKey, not_before: Timestamp, validity_seconds: i64) -> Self {
        CertificateRequest {
            serial: None,
            role,
            subject_key,
            subject_name: None,
            not_before,
            validity_seconds,
            commitments: Vec::new(),
        }
    }

    pub fn agent(
        subject_key: PublicKey,
        name: AnsName,
        commitments: Vec<CapabilityCommitment>,
        not_before: Timestamp,
        validity_seconds: i64,
    ) -> Self {
        CertificateRequest {
            subject_name: Some(name),
            commitments,
            ..CertificateRequest::new(CertRole::Agent, subject_key, not_before, validity_seconds)
        }
    }
}

pub fn issue_certificate(issuer: Issuer<'_>, req: CertificateRequest) -> Result<Certificate, IssueError> {
    if req.validity_seconds <= 0 {
        return Err(IssueError::Malformed("validity must be positive".into()));
    }
    match (req.role, req.subject_name.is_some()) {
        (CertRole::Agent, false) => return Err(IssueError::Malformed("agent certificates need a subject name".into())),
        (CertRole::Root | CertRole::Intermediate, true) => {
            return Err(IssueError::Malformed("only agent certificates carry a subject name".into()))
        }
        _ => {}
    }
    if req.role != CertRole::Agent && !req.commitments.is_empty() {
        return Err(IssueError::Malformed("only agent certificates carry capability commitments".into()));
    }
    let not_after = req
        .not_before
        .checked_add(req.validity_seconds)
        .ok_or_else(|| IssueError::Malformed("validity overflows".into()))?;

    let subject_did = derive_did(&req.subject_key);
    let (keys, issuer_did) = match issuer {
        Issuer::SelfSigned(keys) => {
            if req.role != CertRole::Root {
                return Err(IssueError::RoleViolation(format!("{} certificates cannot be self-signed", req.role)));
            }
            if keys.public_key() != req.subject_key {
                return Err(IssueError::Malformed("self-signed subject key must be the signing key".into()));
            }
            (keys, subject_did.clone())
        }
        Issuer::Authority { keys, cert } => {
            let permitted = matches!(
                (cert.role, req.role),
                (CertRole::Root, CertRole::Intermediate) | (CertRole::Intermediate, CertRole::Agent)
            );
            if !permitted {
                return Err(IssueError::RoleViolation(format!(
                    "{} certificate cannot issue a {} certificate",
                    cert.role, req.role
                )));
            }
            if keys.public_key() != cert.public_key {
                return Err(IssueError::Malformed("issuer key does not match issuer certificate".into()));
            }
            if req.not_before < cert.not_before || not_after > cert.not_after {
                return Err(IssueError::WindowExceeded {
                    not_before: req.not_before,
                    not_after,
                    issuer_not_before: cert.not_before,
                    issuer_not_after: cert.not_after,
                });
            }
            (keys, cert.subject_did.clone())
        }
    };

    let mut cert = Certificate {
        serial: req.serial.unwrap_or_else(|| OsRng.next_u64()),
        subject_did,
        subject_name: req.subject_name,
        issuer_did,
        public_key: req.subject_key,
        not_before: req.not_before,
        not_after,
        role: req.role,
        capability_commitments: req.commitments,
        signature: Signature([0; 64]),
    };
    cert.signature = keys.sign(&cert.canonical_bytes());
    Ok(cert)
}

/// `agent -> intermediate -> root`. Serialized as a 3-element array, leaf first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CertificateChain {
    pub agent: Certificate,
    pub intermediate: Certificate,
    pub root: Certificate,
}

impl Serialize for CertificateChain {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        [&self.agent, &self.intermediate, &self.root].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CertificateChain {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [agent, intermediate, root] = <[Certificate; 3]>::deserialize(deserializer)?;
        Ok(CertificateChain { agent, intermediate, root })
    }
}

impl CertificateChain {
    pub fn to_canonical_string(&self) -> String {
        canonical::to_canonical_string(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChainError {
    #[error("root certificate {0} is not a trust anchor")]
    UntrustedRoot(Did),
    #[error("invalid chain: {0}")]
    Invalid(String),
    #[error("{role} certificate expired at {not_after}")]
    Expired { role: CertRole, not_after: Timestamp },
    #[error("{role} certificate not valid before {not_before}")]
    NotYetValid { role: CertRole, not_before: Timestamp },
}

impl ChainError {
    pub fn code(&self) -> ErrorCode {
        match self {
            ChainError::UntrustedRoot(_) => ErrorCode::UntrustedRoot,
            ChainError::Invalid(_) => ErrorCode::ChainInvalid,
            ChainError::Expired { .. } => ErrorCode::CertExpired,
            ChainError::NotYetValid { .. } => ErrorCode::CertNotYetValid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("trust anchor {did} rejected: {reason}")]
pub struct AnchorError {
    pub did: Did,
    pub reason: String,
}

/// Root certificates accepted a priori. Each anchor's self-signature is
/// checked once on insertion.
#[derive(Clone, Debug, Default)]
pub struct TrustAnchors {
    roots: HashMap<Did, Certificate>,
}

impl TrustAnchors {
    pub fn new(roots: impl IntoIterator<Item = Certificate>) -> Result<Self, AnchorError> {
        let mut anchors = TrustAnchors::default();
        for root in roots {
            anchors.insert(root)?;
        }
        Ok(anchors)
    }

    pub fn insert(&mut self, root: Certificate) -> Result<(), AnchorError> {
        let reject = |reason: &str| AnchorError { did: root.subject_did.clone(), reason: reason.to_owned() };
        if root.role != CertRole::Root || !root.is_self_signed() {
            return Err(reject("not a self-signed root"));
        }
        if derive_did(&root.public_key) != root.subject_did {
            return Err(reject("subject DID does not match public key"));
        }
        if !root.verify_signature(&root.public_key) {
            return Err(reject("bad self-signature"));
        }
        self.roots.insert(root.subject_did.clone(), root);
        Ok(())
    }

    pub fn contains(&self, root: &Certificate) -> bool {
        self.roots.get(&root.subject_did) == Some(root)
    }

    pub fn get(&self, did: &Did) -> Option<&Certificate> {
        self.roots.get(did)
    }

    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Certificate> {
        self.roots.values()
    }
}

/// Checks structure, anchoring, validity windows and signatures, in that
/// order, so an expired certificate is reported before any signature work.
pub fn validate_chain(chain: &CertificateChain, anchors: &TrustAnchors, now: Timestamp) -> Result<(), ChainError> {
    let invalid = |msg: &str| Err(ChainError::Invalid(msg.to_owned()));
    let CertificateChain { agent, intermediate, root } = chain;

    if agent.role != CertRole::Agent || intermediate.role != CertRole::Intermediate || root.role != CertRole::Root {
        return invalid("roles must be agent, intermediate, root");
    }
    if agent.issuer_did != intermediate.subject_did {
        return invalid("agent issuer does not match intermediate subject");
    }
    if intermediate.issuer_did != root.subject_did {
        return invalid("intermediate issuer does not match root subject");
    }
    if !root.is_self_signed() {
        return invalid("root is not self-issued");
    }
    for cert in [agent, intermediate, root] {
        if cert.not_before >= cert.not_after {
            return invalid("empty validity window");
        }
        if derive_did(&cert.public_key) != cert.subject_did {
            return invalid("subject DID does not match public key");
        }
    }
    if agent.subject_name.is_none() {
        return invalid("agent certificate has no subject name");
    }
    if intermediate.subject_name.is_some() || !intermediate.capability_commitments.is_empty() {
        return invalid("intermediate carries agent-only fields");
    }

    if !anchors.contains(root) {
        return Err(ChainError::UntrustedRoot(root.subject_did.clone()));
    }

    for cert in [agent, intermediate, root] {
        if now < cert.not_before {
            return Err(ChainError::NotYetValid { role: cert.role, not_before: cert.not_before });
        }
        if now > cert.not_after {
            return Err(ChainError::Expired { role: cert.role, not_after: cert.not_after });
        }
    }

    // the root's self-signature was verified when it became an anchor
    if !intermediate.verify_signature(&root.public_key) {
        return invalid("intermediate signature does not verify under root key");
    }
    if !agent.verify_signature(&intermediate.public_key) {
        return invalid("agent signature does not verify under intermediate key");
    }
    Ok(())
}
