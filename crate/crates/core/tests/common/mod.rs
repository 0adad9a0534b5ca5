#![allow(dead_code)]

use ans_core::attestation::{create_capability, CapabilitySecret};
use ans_core::identity::{KeyPair, Timestamp, DEFAULT_AGENT_VALIDITY};
use ans_core::policy::{load_policies, Policy};
use ans_core::registry::RegistrationRequest;
use ans_core::{AnsName, CertificateAuthority, CertificateChain, Label};

pub const T0: Timestamp = 1_760_000_000;

pub const DRIFT: &str = "a2a://concept-drift-detector.concept-drift-detection.research-lab.v2.1.prod";
pub const RETRAINER: &str = "mcp://model-retrainer.model-training.mlops-team.v1.0.staging";
pub const SCANNER: &str = "acp://security-scanner.security-scanning.devsecops-team.v3.2.hipaa";

pub fn label(s: &str) -> Label {
    Label::new(s).unwrap()
}

pub fn allow_all() -> Vec<Policy> {
    load_policies(r#"{"policies":[{"id":"open","description":"allow everything","rules":[
        {"id":"allow-all","effect":"allow"}]}]}"#)
    .unwrap()
}

pub struct Agent {
    pub name: AnsName,
    pub keys: KeyPair,
    pub chain: CertificateChain,
    pub secrets: Vec<CapabilitySecret>,
}

impl Agent {
    pub fn new(ca: &CertificateAuthority, name: &str, extra_caps: &[&str], now: Timestamp) -> Agent {
        let name: AnsName = name.parse().unwrap();
        let keys = KeyPair::generate();
        Agent::with_keys(ca, name, keys, extra_caps, now)
    }

    pub fn with_keys(ca: &CertificateAuthority, name: AnsName, keys: KeyPair, extra_caps: &[&str], now: Timestamp) -> Agent {
        let mut secrets = vec![create_capability(name.capability.clone()).0];
        for cap in extra_caps {
            secrets.push(create_capability(label(cap)).0);
        }
        let commitments = secrets.iter().map(|s| s.commitment()).collect();
        let chain = ca.issue_agent(keys.public_key(), name.clone(), commitments, now, DEFAULT_AGENT_VALIDITY).unwrap();
        Agent { name, keys, chain, secrets }
    }

    pub fn request(&self, namespace: &str) -> RegistrationRequest {
        RegistrationRequest::signed(&self.keys, &self.name, "http://127.0.0.1:9000/agent", self.chain.clone(), label(namespace))
    }
}
