//! Agent identity: keys, certificate chain and capability secrets.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use ans_core::attestation::{create_capability, CapabilityCommitment, CapabilitySecret};
use ans_core::canonical::hex_array;
use ans_core::identity::{KeyPair, Timestamp};
use ans_core::registry::{LifecycleRequest, RegistrationRequest};
use ans_core::{AnsName, CertificateAuthority, CertificateChain, Did, Label};

use crate::error::ClientError;

/// Everything an agent needs to act under its name. Never sent anywhere as
/// a whole; only the chain and commitments leave the process.
#[derive(Clone, Debug)]
pub struct AgentIdentity {
    name: AnsName,
    keys: KeyPair,
    chain: CertificateChain,
    capabilities: BTreeMap<Label, CapabilitySecret>,
    endpoint: String,
}

impl AgentIdentity {
    /// Checks that the chain is for `name` and `keys`, and that every
    /// committed capability has its secret.
    pub fn new(
        name: AnsName,
        keys: KeyPair,
        chain: CertificateChain,
        secrets: impl IntoIterator<Item = CapabilitySecret>,
        endpoint: impl Into<String>,
    ) -> Result<Self, ClientError> {
        let capabilities: BTreeMap<Label, CapabilitySecret> =
            secrets.into_iter().map(|s| (s.capability.clone(), s)).collect();
        if chain.agent.subject_name.as_ref() != Some(&name) {
            return Err(ClientError::Identity(format!("certificate is not issued to {name}")));
        }
        if chain.agent.public_key != keys.public_key() {
            return Err(ClientError::Identity("certificate key does not match the identity key".into()));
        }
        for c in &chain.agent.capability_commitments {
            match capabilities.get(&c.capability) {
                Some(s) if s.commitment() == *c => {}
                _ => return Err(ClientError::Identity(format!("no secret for committed capability `{}`", c.capability))),
            }
        }
        Ok(AgentIdentity { name, keys, chain, capabilities, endpoint: endpoint.into() })
    }

    /// Fresh keys and capability secrets, certified by `ca`. The name's own
    /// capability is always included.
    pub fn bootstrap(
        ca: &CertificateAuthority,
        name: AnsName,
        extra_capabilities: &[Label],
        endpoint: impl Into<String>,
        not_before: Timestamp,
        validity_seconds: i64,
    ) -> Result<Self, ClientError> {
        let keys = KeyPair::generate();
        let mut caps = vec![name.capability.clone()];
        caps.extend(extra_capabilities.iter().filter(|c| **c != name.capability).cloned());
        let secrets: Vec<CapabilitySecret> = caps.into_iter().map(|c| create_capability(c).0).collect();
        let commitments: Vec<CapabilityCommitment> = secrets.iter().map(|s| s.commitment()).collect();
        let chain = ca
            .issue_agent(keys.public_key(), name.clone(), commitments, not_before, validity_seconds)
            .map_err(|e| ClientError::Identity(e.to_string()))?;
        AgentIdentity::new(name, keys, chain, secrets, endpoint)
    }

    pub fn name(&self) -> &AnsName {
        &self.name
    }

    pub fn did(&self) -> Did {
        self.keys.did()
    }

    pub fn keys(&self) -> &KeyPair {
        &self.keys
    }

    pub fn chain(&self) -> &CertificateChain {
        &self.chain
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn secret(&self, capability: &Label) -> Option<&CapabilitySecret> {
        self.capabilities.get(capability)
    }

    pub fn capabilities(&self) -> impl Iterator<Item = &Label> {
        self.capabilities.keys()
    }

    pub fn commitments(&self) -> Vec<CapabilityCommitment> {
        self.chain.agent.capability_commitments.clone()
    }

    pub fn registration_request(&self, namespace: Label) -> RegistrationRequest {
        RegistrationRequest::signed(&self.keys, &self.name, &self.endpoint, self.chain.clone(), namespace)
    }

    pub fn renewal(&self, at: Timestamp) -> LifecycleRequest {
        LifecycleRequest::renew(&self.keys, &self.name, at)
    }

    pub fn revocation(&self, at: Timestamp) -> LifecycleRequest {
        LifecycleRequest::revoke(&self.keys, &self.name, at)
    }

    /// Adds a secret the certificate does not commit to. Useful only for
    /// exercising escalation checks.
    pub fn with_uncommitted_secret(mut self, secret: CapabilitySecret) -> Self {
        self.capabilities.insert(secret.capability.clone(), secret);
        self
    }

    pub fn save(&self, path: &Path) -> Result<(), ClientError> {
        let stored = StoredIdentity {
            name: self.name.clone(),
            identity_seed: self.keys.seed(),
            chain: self.chain.clone(),
            capabilities: self.capabilities.values().map(|s| StoredSecret { capability: s.capability.clone(), seed: s.seed() }).collect(),
            endpoint: self.endpoint.clone(),
        };
        let text = serde_json::to_string_pretty(&stored).map_err(|e| ClientError::Identity(e.to_string()))?;
        write_private(path, text.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ClientError> {
        let text = std::fs::read_to_string(path)?;
        let stored: StoredIdentity =
            serde_json::from_str(&text).map_err(|e| ClientError::Identity(format!("{}: {e}", path.display())))?;
        AgentIdentity::new(
            stored.name,
            KeyPair::from_seed(stored.identity_seed),
            stored.chain,
            stored.capabilities.into_iter().map(|s| CapabilitySecret::from_seed(s.capability, s.seed)),
            stored.endpoint,
        )
    }
}

/// On-disk identity file. Holds secret seeds, so it is written owner-only.
#[derive(Serialize, Deserialize)]
struct StoredIdentity {
    name: AnsName,
    #[serde(with = "hex_array")]
    identity_seed: [u8; 32],
    chain: CertificateChain,
    capabilities: Vec<StoredSecret>,
    endpoint: String,
}

#[derive(Serialize, Deserialize)]
struct StoredSecret {
    capability: Label,
    #[serde(with = "hex_array")]
    seed: [u8; 32],
}

/// Writes `bytes` to `path` readable by the owner only (where supported).
pub fn write_private(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut options = std::fs::OpenOptions::new();
    options.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        options.mode(0o600);
    }
    use std::io::Write;
    options.open(path)?.write_all(bytes)
}
