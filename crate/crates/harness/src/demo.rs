//! Scripted lifecycle for a population of agents, with one bad manifest
//! injected at the end.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use ans_client::capability::Verdict;
use ans_client::{
    initiate, request_capability, respond, serve_capability_request, AgentIdentity, ClientError, RegistryClient,
    TcpTransport, DEFAULT_HANDSHAKE_TIMEOUT,
};
use ans_core::attestation::ChallengeStore;
use ans_core::identity::{unix_now, TrustAnchors};
use ans_core::registry::{AgentRecord, Registry, RegistryConfig, RegistryEvent};
use ans_core::wire::ResolveParams;
use ans_core::{AnsName, ErrorCode, NameQuery};

use crate::bench::start_registry;
use crate::config::DemoConfig;
use crate::error::HarnessError;
use crate::fixtures::{self, AgentSpec};
use crate::stats::{LatencySummary, Sink};

pub const PHASES: [&str; 6] = ["admission", "register", "discover", "handshake", "capability", "renew"];
pub const INVALID_AGENT: &str = "a2a://rogue-agent.data-validation.data-eng.v1.0.dev";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub config: DemoConfig,
    pub agents: usize,
    /// Agents that got through every phase.
    pub completed: usize,
    pub success_rate: f64,
    pub failures: Vec<String>,
    pub invalid_manifest_rejected: bool,
    /// Outcome of registering the invalid agent anyway.
    pub invalid_registration: String,
    pub invalid_acceptance_rate: f64,
    /// Every swept resolve answer is byte-identical before and after the
    /// rejected attempt, and the log did not grow.
    pub rollback_unchanged: bool,
    pub queries_compared: usize,
    pub phases: BTreeMap<String, LatencySummary>,
    /// Kinds of the events in the registry log, in order.
    pub event_kinds: Vec<String>,
    pub elapsed_seconds: f64,
}

impl DemoReport {
    pub fn passed(&self) -> bool {
        self.completed == self.agents
            && self.invalid_manifest_rejected
            && self.invalid_acceptance_rate == 0.0
            && self.rollback_unchanged
    }
}

struct Agent {
    spec: AgentSpec,
    identity: AgentIdentity,
    /// Verifier-side nonce memory, shared by all of this agent's sessions.
    store: ChallengeStore,
    failure: Option<String>,
}

impl Agent {
    fn fail(&mut self, phase: &str, why: impl std::fmt::Display) {
        if self.failure.is_none() {
            self.failure = Some(format!("{} during {phase}: {why}", self.spec.name));
        }
    }
}

async fn timed<T, F: std::future::Future<Output = T>>(sink: &Sink, phase: &str, fut: F) -> T {
    let t = Instant::now();
    let out = fut.await;
    sink.record(phase, t.elapsed());
    out
}

/// Handshake from `a` to `b` over loopback TCP, then `b` verifies `a`'s
/// own capability inside the session.
async fn ring_step(
    a: &Agent,
    b: &Agent,
    b_record: &AgentRecord,
    anchors: &TrustAnchors,
    sink: &Sink,
) -> Result<Verdict, ClientError> {
    let now = unix_now();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    let t = Instant::now();
    let accept = async {
        let (stream, _) = listener.accept().await?;
        let mut transport = TcpTransport::new(stream);
        let session = respond(&b.identity, anchors, &mut transport, now, DEFAULT_HANDSHAKE_TIMEOUT).await?;
        Ok::<_, ClientError>((session, transport))
    };
    let connect = async {
        let mut transport = TcpTransport::connect(addr).await?;
        let session = initiate(&a.identity, Some(b_record), anchors, &mut transport, now, DEFAULT_HANDSHAKE_TIMEOUT).await?;
        Ok::<_, ClientError>((session, transport))
    };
    let (responder, initiator) = tokio::join!(accept, connect);
    let ((mut sb, mut tb), (mut sa, mut ta)) = (responder?, initiator?);
    if sa.transcript_hash != sb.transcript_hash {
        return Err(ClientError::peer(ErrorCode::BadSignature, "transcripts differ"));
    }
    sink.record("handshake", t.elapsed());

    let cap = a.identity.name().capability.clone();
    let t = Instant::now();
    let (asked, served) = tokio::join!(
        request_capability(&mut sa, &mut ta, &cap, &a.identity, now),
        serve_capability_request(&mut sb, &mut tb, b.identity.keys(), anchors, &b.store, now)
    );
    sink.record("capability", t.elapsed());
    served?;
    asked
}

fn sweep_queries(specs: &[AgentSpec], extra: &AnsName) -> Vec<ResolveParams> {
    let names: Vec<&AnsName> = specs.iter().map(|s| &s.name).chain([extra]).collect();
    let mut queries = std::collections::BTreeSet::new();
    for n in &names {
        queries.insert(("capability", n.capability.to_string()));
        queries.insert(("provider", n.provider.to_string()));
        queries.insert(("protocol", n.protocol.to_string()));
        queries.insert(("env", n.extension.to_string()));
        queries.insert(("agent", n.agent_id.to_string()));
        queries.insert(("latest", n.capability.to_string()));
    }
    queries.insert(("capability", fixtures::SHARED_CAPABILITY.to_owned()));
    queries
        .into_iter()
        .map(|(field, value)| {
            let mut p = ResolveParams::default();
            match field {
                "capability" => p.capability = Some(value),
                "provider" => p.provider = Some(value),
                "protocol" => p.protocol = Some(value),
                "env" => p.env = Some(value),
                "agent" => p.agent = Some(value),
                _ => {
                    p.capability = Some(value);
                    p.version = Some("latest".into());
                }
            }
            p
        })
        .collect()
}

async fn sweep(client: &RegistryClient, queries: &[ResolveParams]) -> Result<Vec<Vec<u8>>, HarnessError> {
    let mut out = Vec::with_capacity(queries.len());
    for q in queries {
        out.push(client.resolve_raw(q).await.map_err(|e| HarnessError::unexpected("resolve sweep", e))?);
    }
    Ok(out)
}

fn event_kinds(log: &std::path::Path) -> Result<Vec<String>, HarnessError> {
    let text = std::fs::read_to_string(log)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str::<RegistryEvent>(l)
                .map(|e| e.kind.label().to_owned())
                .map_err(|e| HarnessError::Task(format!("unreadable log line: {e}")))
        })
        .collect()
}

/// Runs every agent through admission, registration, discovery, a handshake
/// ring, capability checks and renewal, then tries to admit and register a
/// manifest that policy forbids.
pub async fn run_demo(config: &DemoConfig) -> Result<DemoReport, HarnessError> {
    config.validate()?;
    let started = Instant::now();
    let dir = tempfile::tempdir()?;
    let log_path = dir.path().join("events.log");
    let registry = Registry::open(RegistryConfig::default(), &log_path, None, false)
        .map_err(|e| HarnessError::Task(e.to_string()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let not_before = unix_now() - 60;
    let ca = fixtures::seeded_ca(&mut rng, not_before);
    let anchors = ca.anchors();
    let server = start_registry(registry, anchors.clone()).await?;
    let client = RegistryClient::new(&server.base_url())?;
    let sink = Sink::default();

    let specs = fixtures::agent_specs(config.n_agents, config.n_namespaces);
    let mut agents: Vec<Agent> = specs
        .iter()
        .map(|spec| Agent {
            identity: fixtures::seeded_identity(&ca, spec, &mut rng, not_before, fixtures::AGENT_VALIDITY),
            spec: spec.clone(),
            store: ChallengeStore::default(),
            failure: None,
        })
        .collect();

    for a in agents.iter_mut() {
        let manifest = fixtures::manifest_for(&a.identity, &a.spec.namespace);
        match timed(&sink, "admission", client.validate_manifest(&manifest)).await {
            Ok(d) if d.allowed => {}
            Ok(d) => a.fail("admission", d.explain()),
            Err(e) => a.fail("admission", e),
        }
    }
    for a in agents.iter_mut().filter(|a| a.failure.is_none()) {
        let req = a.identity.registration_request(a.spec.namespace.clone());
        if let Err(e) = timed(&sink, "register", client.register(&req)).await {
            a.fail("register", e);
        }
    }

    let n = agents.len();
    let mut peer_records: Vec<Option<AgentRecord>> = vec![None; n];
    for i in 0..n {
        let peer = agents[(i + 1) % n].identity.name().clone();
        let query = NameQuery {
            capability: Some(peer.capability.clone()),
            provider: Some(peer.provider.clone()),
            agent_id: Some(peer.agent_id.clone()),
            ..Default::default()
        };
        match timed(&sink, "discover", client.resolve(&query)).await {
            Ok(found) => match found.into_iter().find(|r| r.name == peer) {
                Some(r) => peer_records[i] = Some(r),
                None => agents[i].fail("discover", format!("{peer} not found")),
            },
            Err(e) => agents[i].fail("discover", e),
        }
    }

    for i in 0..n {
        let Some(record) = peer_records[i].clone() else { continue };
        if agents[i].failure.is_some() {
            continue;
        }
        let (a, b) = (&agents[i], &agents[(i + 1) % n]);
        let outcome = ring_step(a, b, &record, &anchors, &sink).await;
        match outcome {
            Ok(v) if v.granted => {}
            Ok(v) => agents[i].fail("capability", format!("{:?}: {}", v.code, v.message)),
            Err(e) => agents[i].fail("handshake", e),
        }
    }

    for a in agents.iter_mut().filter(|a| a.failure.is_none()) {
        let req = a.identity.renewal(unix_now());
        if let Err(e) = timed(&sink, "renew", client.renew(a.identity.name(), &req)).await {
            a.fail("renew", e);
        }
    }

    // injected failure
    let rogue_name: AnsName = INVALID_AGENT.parse().expect("valid name");
    let queries = sweep_queries(&specs, &rogue_name);
    let before = sweep(&client, &queries).await?;
    let seq_before = server.state().registry().last_seq();
    let rogue = fixtures::identity_with(&ca, rogue_name, &[], &mut rng, not_before, fixtures::AGENT_VALIDITY);
    let rogue_ns = fixtures::namespace(0);
    let admission = client.validate_manifest(&fixtures::manifest_for(&rogue, &rogue_ns)).await;
    let invalid_manifest_rejected = matches!(&admission, Ok(d) if !d.allowed);
    let attempt = client.register(&rogue.registration_request(rogue_ns)).await;
    let invalid_registration = match &attempt {
        Ok(_) => "ACCEPTED".to_owned(),
        Err(e) => e.code().map(|c| c.as_str().to_owned()).unwrap_or_else(|| e.to_string()),
    };
    let after = sweep(&client, &queries).await?;
    let rollback_unchanged = before == after && server.state().registry().last_seq() == seq_before;

    server.shutdown().await.map_err(HarnessError::from)?;
    let event_kinds = event_kinds(&log_path)?;

    let failures: Vec<String> = agents.iter().filter_map(|a| a.failure.clone()).collect();
    let completed = n - failures.len();
    Ok(DemoReport {
        config: config.clone(),
        agents: n,
        completed,
        success_rate: completed as f64 / n as f64,
        failures,
        invalid_manifest_rejected,
        invalid_acceptance_rate: if attempt.is_ok() { 1.0 } else { 0.0 },
        invalid_registration,
        rollback_unchanged,
        queries_compared: queries.len(),
        phases: sink.summaries(),
        event_kinds,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Events a clean run of `n` agents must leave: one registration and one
/// renewal each.
pub fn expected_event_kinds(n: usize) -> Vec<String> {
    std::iter::repeat_n("Registered", n).chain(std::iter::repeat_n("Renewed", n)).map(String::from).collect()
}

