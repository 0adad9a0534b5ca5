#![allow(dead_code)]

use std::sync::Arc;

use ans_client::AgentIdentity;
use ans_core::attestation::ChallengeStore;
use ans_core::identity::{Timestamp, DEFAULT_AGENT_VALIDITY};
use ans_core::policy::load_policies;
use ans_core::registry::{Registry, RegistryConfig};
use ans_core::{AnsName, CertificateAuthority, Label};
use ans_server::{serve_state, AlertConfig, AppState, ServeOptions, ServerHandle};

pub const T0: Timestamp = 1_760_000_000;
pub const DRIFT: &str = "a2a://concept-drift-detector.concept-drift-detection.research-lab.v2.1.prod";
pub const RETRAINER: &str = "mcp://model-retrainer.model-training.mlops-team.v1.0.staging";

pub fn label(s: &str) -> Label {
    Label::new(s).unwrap()
}

pub fn name(s: &str) -> AnsName {
    s.parse().unwrap()
}

pub fn identity(ca: &CertificateAuthority, n: &str, extra: &[&str]) -> AgentIdentity {
    let extra: Vec<Label> = extra.iter().map(|c| label(c)).collect();
    AgentIdentity::bootstrap(ca, name(n), &extra, "http://127.0.0.1:9000/agent", T0, DEFAULT_AGENT_VALIDITY).unwrap()
}

pub async fn server(ca: &CertificateAuthority) -> ServerHandle {
    let policies = load_policies(r#"{"policies":[{"id":"open","rules":[{"id":"allow-all","effect":"allow"}]}]}"#).unwrap();
    let state = AppState::new(
        Arc::new(Registry::new(RegistryConfig::default())),
        policies,
        ca.anchors(),
        ChallengeStore::default(),
        AlertConfig::default(),
        Arc::new(|| T0 + 10),
    );
    serve_state("127.0.0.1:0".parse().unwrap(), state, ServeOptions::default()).await.unwrap()
}
