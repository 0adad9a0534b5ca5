#![allow(dead_code)]

use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use ans_core::attestation::{create_capability, CapabilitySecret, ChallengeStore};
use ans_core::identity::{KeyPair, Timestamp, DEFAULT_AGENT_VALIDITY};
use ans_core::policy::{load_policies, Policy};
use ans_core::registry::{RegistrationRequest, Registry, RegistryConfig};
use ans_core::{AnsName, CertificateAuthority, CertificateChain, Label};
use ans_server::{serve_state, AlertConfig, AppState, ServeOptions, ServerHandle};

pub const T0: Timestamp = 1_760_000_000;
pub const DRIFT: &str = "a2a://concept-drift-detector.concept-drift-detection.research-lab.v2.1.prod";

/// Both policies named by the example manifest, each allowing everything,
/// plus a deny for shell execution.
pub const POLICIES: &str = r#"{"policies":[
  {"id":"agent-security-policy","rules":[
    {"id":"allow-all","effect":"allow"},
    {"id":"no-shell","effect":"deny","match":{"capability":"shell-*"}}]},
  {"id":"data-access-policy","rules":[{"id":"allow-all","effect":"allow"}]}
]}"#;

pub fn policies() -> Vec<Policy> {
    load_policies(POLICIES).unwrap()
}

pub fn label(s: &str) -> Label {
    Label::new(s).unwrap()
}

pub struct Agent {
    pub name: AnsName,
    pub keys: KeyPair,
    pub chain: CertificateChain,
    pub secrets: Vec<CapabilitySecret>,
}

impl Agent {
    pub fn new(ca: &CertificateAuthority, name: &str, extra: &[&str], now: Timestamp, validity: i64) -> Agent {
        let name: AnsName = name.parse().unwrap();
        let keys = KeyPair::generate();
        let mut secrets = vec![create_capability(name.capability.clone()).0];
        secrets.extend(extra.iter().map(|c| create_capability(label(c)).0));
        let commitments = secrets.iter().map(|s| s.commitment()).collect();
        let chain = ca.issue_agent(keys.public_key(), name.clone(), commitments, now, validity).unwrap();
        Agent { name, keys, chain, secrets }
    }

    pub fn standard(ca: &CertificateAuthority, name: &str) -> Agent {
        Agent::new(ca, name, &[], T0, DEFAULT_AGENT_VALIDITY)
    }

    pub fn request(&self) -> RegistrationRequest {
        RegistrationRequest::signed(&self.keys, &self.name, "http://127.0.0.1:9000/agent", self.chain.clone(), label("mlops-system"))
    }
}

pub struct TestServer {
    pub handle: ServerHandle,
    pub ca: CertificateAuthority,
    pub clock: Arc<AtomicI64>,
    pub http: reqwest::Client,
}

impl TestServer {
    pub async fn start() -> TestServer {
        let ca = CertificateAuthority::init(T0);
        TestServer::start_with(ca, Arc::new(Registry::new(RegistryConfig::default()))).await
    }

    pub async fn start_with(ca: CertificateAuthority, registry: Arc<Registry>) -> TestServer {
        TestServer::start_with_options(ca, registry, ServeOptions::default()).await
    }

    pub async fn start_with_options(ca: CertificateAuthority, registry: Arc<Registry>, options: ServeOptions) -> TestServer {
        let clock = Arc::new(AtomicI64::new(T0 + 10));
        let c = clock.clone();
        let state = AppState::new(
            registry,
            policies(),
            ca.anchors(),
            ChallengeStore::default(),
            AlertConfig::default(),
            Arc::new(move || c.load(Ordering::SeqCst)),
        );
        let handle = serve_state("127.0.0.1:0".parse().unwrap(), state, options).await.unwrap();
        TestServer { handle, ca, clock, http: reqwest::Client::new() }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.handle.base_url(), path)
    }

    pub fn set_now(&self, t: Timestamp) {
        self.clock.store(t, Ordering::SeqCst);
    }

    pub fn now(&self) -> Timestamp {
        self.clock.load(Ordering::SeqCst)
    }
}

/// Percent-encodes a name for use as a path segment.
pub fn segment(name: &str) -> String {
    name.bytes()
        .map(|b| match b {
            b'a'..=b'z' | b'0'..=b'9' | b'-' | b'.' => (b as char).to_string(),
            _ => format!("%{b:02X}"),
        })
        .collect()
}
