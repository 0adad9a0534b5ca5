//! A root + intermediate certificate authority pair.

use crate::attestation::CapabilityCommitment;
use crate::identity::{
    issue_certificate, CertRole, Certificate, CertificateChain, CertificateRequest, IssueError, Issuer, KeyPair,
    PublicKey, Timestamp, TrustAnchors, DEFAULT_INTERMEDIATE_VALIDITY, DEFAULT_ROOT_VALIDITY,
};
use crate::name::AnsName;

#[derive(Clone, Debug)]
pub struct CertificateAuthority {
    pub root_keys: KeyPair,
    pub root: Certificate,
    pub intermediate_keys: KeyPair,
    pub intermediate: Certificate,
}

impl CertificateAuthority {
    /// Fresh root and intermediate with the default validities, both
    /// starting at `now`.
    pub fn init(now: Timestamp) -> Self {
        CertificateAuthority::from_keys(KeyPair::generate(), KeyPair::generate(), now)
    }

    pub fn from_keys(root_keys: KeyPair, intermediate_keys: KeyPair, now: Timestamp) -> Self {
        let root = issue_certificate(
            Issuer::SelfSigned(&root_keys),
            CertificateRequest::new(CertRole::Root, root_keys.public_key(), now, DEFAULT_ROOT_VALIDITY),
        )
        .expect("root issuance is always permitted");
        let intermediate = issue_certificate(
            Issuer::Authority { keys: &root_keys, cert: &root },
            CertificateRequest::new(
                CertRole::Intermediate,
                intermediate_keys.public_key(),
                now,
                DEFAULT_INTERMEDIATE_VALIDITY,
            ),
        )
        .expect("intermediate fits in the root window");
        CertificateAuthority { root_keys, root, intermediate_keys, intermediate }
    }

    pub fn anchors(&self) -> TrustAnchors {
        TrustAnchors::new([self.root.clone()]).expect("root is self-signed")
    }

    pub fn issue_agent(
        &self,
        agent_key: PublicKey,
        name: AnsName,
        commitments: Vec<CapabilityCommitment>,
        not_before: Timestamp,
        validity_seconds: i64,
    ) -> Result<CertificateChain, IssueError> {
        let agent = issue_certificate(
            Issuer::Authority { keys: &self.intermediate_keys, cert: &self.intermediate },
            CertificateRequest::agent(agent_key, name, commitments, not_before, validity_seconds),
        )?;
        Ok(self.chain_for(agent))
    }

    pub fn chain_for(&self, agent: Certificate) -> CertificateChain {
        CertificateChain { agent, intermediate: self.intermediate.clone(), root: self.root.clone() }
    }
}
