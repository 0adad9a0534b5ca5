//! Latency benchmark against an in-process registry, plus throughput runs.

use std::collections::BTreeMap;
use std::hint::black_box;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tokio::task::JoinSet;
use tokio::time::sleep_until;

use ans_client::{AgentIdentity, RegistryClient};
use ans_core::attestation::ChallengeStore;
use ans_core::identity::{unix_now, Timestamp};
use ans_core::policy::{evaluate, EvaluationContext, Phase, PolicySubject};
use ans_core::registry::{Registry, RegistryConfig};
use ans_core::{AgentManifest, Label, NameQuery, Protocol, VersionReq};
use ans_server::Operation;
use ans_server::{serve_state, system_clock, AlertConfig, AppState, ServeOptions, ServerHandle};

use crate::config::BenchConfig;
use crate::error::HarnessError;
use crate::fixtures::{self, AgentSpec};
use crate::stats::{LatencySummary, Sink};
use crate::workload::{self, Op, ResolveKind, SCHEDULE_LEN};

pub const REGISTRATION: &str = "registration";
pub const DISCOVERY: &str = "discovery";
pub const CAPABILITY_VERIFICATION: &str = "capability_verification";
pub const POLICY_EVALUATION: &str = "policy_evaluation";
pub const CERTIFICATE_VALIDATION: &str = "certificate_validation";
pub const RENEWAL: &str = "renewal";
pub const ADMISSION: &str = "admission";

/// 99th-percentile upper bounds in milliseconds, from the published
/// cluster measurements.
pub const P99_BOUNDS_MS: [(&str, f64); 5] = [
    (REGISTRATION, 156.0),
    (DISCOVERY, 41.0),
    (CAPABILITY_VERIFICATION, 267.0),
    (POLICY_EVALUATION, 12.0),
    (CERTIFICATE_VALIDATION, 52.0),
];

pub const REGISTRATION_FLOOR_PER_MIN: f64 = 1_000.0;
pub const RESOLVE_SOFT_FLOOR_PER_SEC: f64 = 10_000.0;
pub const POLICY_SOFT_FLOOR_PER_SEC: f64 = 100_000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub operation: String,
    pub bound_ms: f64,
    /// `None` when the operation produced no samples, which fails the check.
    pub p99_ms: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Environment {
    pub os: String,
    pub arch: String,
    pub cpus: usize,
    pub optimized: bool,
    pub harness_version: String,
}

impl Environment {
    pub fn current() -> Self {
        Environment {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            cpus: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            optimized: !cfg!(debug_assertions),
            harness_version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub operations: BTreeMap<String, LatencySummary>,
    pub bounds: Vec<BoundCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub throughput: Option<ThroughputReport>,
    pub environment: Environment,
    /// Fingerprint of the planned workload; equal seeds give equal digests.
    pub schedule_digest: String,
    pub elapsed_seconds: f64,
}

impl BenchReport {
    pub fn passed(&self) -> bool {
        self.bounds.iter().all(|b| b.pass) && self.throughput.as_ref().is_none_or(|t| t.registration.pass)
    }
}

pub fn check_bounds(operations: &BTreeMap<String, LatencySummary>) -> Vec<BoundCheck> {
    P99_BOUNDS_MS
        .iter()
        .map(|(op, bound)| {
            let p99 = operations.get(*op).map(|s| s.p99_ms);
            BoundCheck { operation: op.to_string(), bound_ms: *bound, p99_ms: p99, pass: p99.is_some_and(|p| p <= *bound) }
        })
        .collect()
}

async fn drain(mut set: JoinSet<Result<(), HarnessError>>) -> Result<(), HarnessError> {
    while let Some(joined) = set.join_next().await {
        match joined {
            Ok(Ok(())) => {}
            Ok(Err(e)) => return Err(e),
            Err(e) => return Err(HarnessError::Task(e.to_string())),
        }
    }
    Ok(())
}

pub(crate) async fn start_registry(
    registry: Registry,
    anchors: ans_core::identity::TrustAnchors,
) -> Result<ServerHandle, HarnessError> {
    let state = AppState::new(
        Arc::new(registry),
        fixtures::policies(),
        anchors,
        ChallengeStore::default(),
        AlertConfig::default(),
        system_clock(),
    );
    Ok(serve_state(([127, 0, 0, 1], 0).into(), state, ServeOptions::default()).await?)
}

struct Agent {
    identity: AgentIdentity,
    spec: AgentSpec,
    manifest: AgentManifest,
    client: RegistryClient,
}

fn query_for(kind: ResolveKind) -> NameQuery {
    let protocols = [Protocol::A2a, Protocol::Mcp, Protocol::Acp];
    match kind {
        ResolveKind::Capability(ns) => NameQuery::capability(fixtures::capability(ns)),
        ResolveKind::Latest(ns) => {
            NameQuery { version_req: Some(VersionReq::Latest), ..NameQuery::capability(fixtures::capability(ns)) }
        }
        ResolveKind::Shared => NameQuery::capability(Label::new(fixtures::SHARED_CAPABILITY).expect("valid label")),
        ResolveKind::Provider(ns) => NameQuery { provider: Some(fixtures::provider(ns)), ..Default::default() },
        ResolveKind::Protocol(p) => NameQuery {
            protocol: Some(protocols[p % protocols.len()]),
            extension: Some(Label::new("prod").expect("valid label")),
            ..Default::default()
        },
    }
}

/// Runs one step and returns the operation name it is reported under.
async fn execute(agent: &Agent, op: Op) -> Result<&'static str, HarnessError> {
    let Agent { identity, manifest, client, .. } = agent;
    match op {
        Op::Resolve(kind) => {
            client.resolve(&query_for(kind)).await.map_err(|e| HarnessError::unexpected(DISCOVERY, e))?;
            Ok(DISCOVERY)
        }
        Op::Renew => {
            client
                .renew(identity.name(), &identity.renewal(unix_now()))
                .await
                .map_err(|e| HarnessError::unexpected(RENEWAL, e))?;
            Ok(RENEWAL)
        }
        Op::Attest => {
            let cap = identity.name().capability.clone();
            let resp = client
                .attest_capability(identity, &cap, unix_now())
                .await
                .map_err(|e| HarnessError::unexpected(CAPABILITY_VERIFICATION, e))?;
            if !resp.granted {
                return Err(HarnessError::Task(format!("attestation of {} was not granted", identity.name())));
            }
            Ok(CAPABILITY_VERIFICATION)
        }
        Op::Admission => {
            let decision =
                client.validate_manifest(manifest).await.map_err(|e| HarnessError::unexpected(ADMISSION, e))?;
            if !decision.allowed {
                return Err(HarnessError::Task(format!("admission of {} denied: {}", identity.name(), decision.explain())));
            }
            Ok(ADMISSION)
        }
    }
}

fn take_stage_samples(state: &AppState, sink: Option<&Sink>) {
    for (op, name) in [(Operation::PolicyEval, POLICY_EVALUATION), (Operation::ChainValidation, CERTIFICATE_VALIDATION)] {
        let samples = state.metrics().take_samples(op);
        if let Some(sink) = sink {
            sink.extend(name, samples);
        }
    }
}

/// Registers every agent concurrently, then drives the seeded mixed
/// workload for `warmup + duration` seconds. Only the initial
/// registrations and post-warmup steps are measured. Any failed operation
/// aborts the run.
pub async fn run_benchmark(config: &BenchConfig) -> Result<BenchReport, HarnessError> {
    config.validate()?;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let not_before = unix_now() - 60;
    let ca = fixtures::seeded_ca(&mut rng, not_before);
    let server = start_registry(Registry::new(RegistryConfig::default()), ca.anchors()).await?;
    let state = server.state().clone();
    state.metrics().set_sampling(true);
    let base = server.base_url();

    let mut agents = Vec::with_capacity(config.n_agents);
    for spec in fixtures::agent_specs(config.n_agents, config.n_namespaces) {
        let identity = fixtures::seeded_identity(&ca, &spec, &mut rng, not_before, fixtures::AGENT_VALIDITY);
        let manifest = fixtures::manifest_for(&identity, &spec.namespace);
        agents.push(Arc::new(Agent { identity, spec, manifest, client: RegistryClient::new(&base)? }));
    }
    let sink = Arc::new(Sink::default());

    let result = async {
        let mut set = JoinSet::new();
        for agent in &agents {
            let (agent, sink) = (agent.clone(), sink.clone());
            set.spawn(async move {
                let t = Instant::now();
                agent
                    .client
                    .register(&agent.identity.registration_request(agent.spec.namespace.clone()))
                    .await
                    .map_err(|e| HarnessError::unexpected(REGISTRATION, e))?;
                sink.record(REGISTRATION, t.elapsed());
                Ok(())
            });
        }
        drain(set).await?;
        take_stage_samples(&state, Some(&sink));

        let warmup_end = tokio::time::Instant::now() + Duration::from_secs(config.warmup_seconds);
        let deadline = warmup_end + Duration::from_secs(config.duration_seconds);
        let mut set = JoinSet::new();
        for agent in &agents {
            let (agent, sink) = (agent.clone(), sink.clone());
            let steps = workload::schedule(config.seed, agent.spec.index, config.n_namespaces, SCHEDULE_LEN);
            set.spawn(async move {
                for step in steps.iter().cycle() {
                    let wake = tokio::time::Instant::now() + step.think;
                    if wake >= deadline {
                        break;
                    }
                    sleep_until(wake).await;
                    let t = Instant::now();
                    let measured = tokio::time::Instant::now() >= warmup_end;
                    let name = execute(&agent, step.op).await?;
                    if measured {
                        sink.record(name, t.elapsed());
                    }
                }
                Ok(())
            });
        }
        tokio::select! {
            r = async {
                sleep_until(warmup_end).await;
                take_stage_samples(&state, None);
                std::future::pending::<()>().await;
            } => r,
            r = drain(set) => r?,
        }
        take_stage_samples(&state, Some(&sink));
        Ok::<_, HarnessError>(())
    }
    .await;
    state.metrics().set_sampling(false);
    let _ = server.shutdown().await;
    result?;

    let operations = sink.summaries();
    Ok(BenchReport {
        config: config.clone(),
        bounds: check_bounds(&operations),
        operations,
        throughput: None,
        environment: Environment::current(),
        schedule_digest: workload::digest(config.seed, config.n_agents, config.n_namespaces),
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThroughputConfig {
    pub registration_seconds: u64,
    /// Offered load; the run falls behind this rate if the registry cannot keep up.
    pub offered_registrations_per_min: u64,
    pub registration_workers: usize,
    pub resolve_records: usize,
    pub resolve_seconds: f64,
    pub policy_seconds: f64,
}

impl Default for ThroughputConfig {
    fn default() -> Self {
        ThroughputConfig {
            registration_seconds: 300,
            offered_registrations_per_min: 3_000,
            registration_workers: 16,
            resolve_records: 1_000,
            resolve_seconds: 3.0,
            policy_seconds: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistrationThroughput {
    pub total: u64,
    pub seconds: f64,
    pub per_min: f64,
    /// Slowest full minute; the whole run when shorter than a minute.
    pub min_window_per_min: f64,
    pub offered_per_min: u64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub registration: RegistrationThroughput,
    pub resolves_per_sec: f64,
    pub resolve_soft_pass: bool,
    pub policy_evals_per_sec: f64,
    pub policy_soft_pass: bool,
}

pub async fn run_throughput(config: &ThroughputConfig) -> Result<ThroughputReport, HarnessError> {
    let registration = registration_throughput(config).await?;
    let resolves_per_sec = resolve_throughput(config.resolve_records, Duration::from_secs_f64(config.resolve_seconds));
    let policy_evals_per_sec = policy_throughput(Duration::from_secs_f64(config.policy_seconds));
    Ok(ThroughputReport {
        registration,
        resolves_per_sec,
        resolve_soft_pass: resolves_per_sec >= RESOLVE_SOFT_FLOOR_PER_SEC,
        policy_evals_per_sec,
        policy_soft_pass: policy_evals_per_sec >= POLICY_SOFT_FLOOR_PER_SEC,
    })
}

/// Fresh agents registered over HTTP against a registry that fsyncs every
/// event to its log.
pub async fn registration_throughput(config: &ThroughputConfig) -> Result<RegistrationThroughput, HarnessError> {
    let dir = tempfile::tempdir()?;
    let now = unix_now();
    let ca = Arc::new(ans_core::CertificateAuthority::init(now - 60));
    let registry = Registry::open(RegistryConfig::default(), &dir.path().join("events.log"), None, true)
        .map_err(|e| HarnessError::Task(e.to_string()))?;
    let server = start_registry(registry, ca.anchors()).await?;
    let base = server.base_url();

    let interval = Duration::from_secs_f64(60.0 / config.offered_registrations_per_min.max(1) as f64);
    let run_for = Duration::from_secs(config.registration_seconds);
    let workers = config.registration_workers.max(1);
    let start = tokio::time::Instant::now();
    let completions = Arc::new(std::sync::Mutex::new(Vec::<Duration>::new()));
    let mut set = JoinSet::new();
    for w in 0..workers {
        let (ca, completions, client) = (ca.clone(), completions.clone(), RegistryClient::new(&base)?);
        set.spawn(async move {
            let mut i = w;
            loop {
                let due = start + interval * i as u32;
                if due - start >= run_for {
                    break;
                }
                sleep_until(due).await;
                let name = format!("a2a://bulk-{i}.throughput-test.bench-lab.v1.0.prod").parse().expect("valid name");
                let identity = AgentIdentity::bootstrap(&ca, name, &[], fixtures::ENDPOINT, now - 60, fixtures::AGENT_VALIDITY)?;
                client
                    .register(&identity.registration_request(Label::new("bulk").expect("valid label")))
                    .await
                    .map_err(|e| HarnessError::unexpected(REGISTRATION, e))?;
                let done = start.elapsed();
                if done <= run_for {
                    completions.lock().expect("lock").push(done);
                }
                i += workers;
            }
            Ok(())
        });
    }
    let result = drain(set).await;
    let _ = server.shutdown().await;
    result?;

    let completions = completions.lock().expect("lock").clone();
    let seconds = run_for.as_secs_f64();
    let total = completions.len() as u64;
    let per_min = total as f64 * 60.0 / seconds;
    let full_minutes = (seconds / 60.0).floor() as usize;
    let min_window_per_min = if full_minutes == 0 {
        per_min
    } else {
        (0..full_minutes)
            .map(|m| {
                let (lo, hi) = (Duration::from_secs(60 * m as u64), Duration::from_secs(60 * (m as u64 + 1)));
                completions.iter().filter(|d| **d >= lo && **d < hi).count() as f64
            })
            .fold(f64::INFINITY, f64::min)
    };
    Ok(RegistrationThroughput {
        total,
        seconds,
        per_min,
        min_window_per_min,
        offered_per_min: config.offered_registrations_per_min,
        pass: per_min >= REGISTRATION_FLOOR_PER_MIN && min_window_per_min >= REGISTRATION_FLOOR_PER_MIN,
    })
}

/// In-process resolves per second over `records` registered agents.
pub fn resolve_throughput(records: usize, run_for: Duration) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let now: Timestamp = unix_now();
    let ca = fixtures::seeded_ca(&mut rng, now - 60);
    let anchors = ca.anchors();
    let policies = fixtures::policies();
    let registry = Registry::new(RegistryConfig::default());
    let n_namespaces = (records / 20).max(1);
    for spec in fixtures::agent_specs(records, n_namespaces) {
        let id = fixtures::identity_with(&ca, spec.name.clone(), &[], &mut rng, now - 60, fixtures::AGENT_VALIDITY);
        registry.register(&id.registration_request(spec.namespace.clone()), &policies, &anchors, now).expect("fixture agents register");
    }
    let queries: Vec<NameQuery> = (0..n_namespaces).map(|ns| NameQuery::capability(fixtures::capability(ns))).collect();
    let started = Instant::now();
    let mut count = 0u64;
    while started.elapsed() < run_for {
        for q in &queries {
            black_box(registry.resolve(black_box(q), &policies, now));
            count += 1;
        }
    }
    count as f64 / started.elapsed().as_secs_f64()
}

/// Admission-phase evaluations per second against a ten-rule set.
pub fn policy_throughput(run_for: Duration) -> f64 {
    let policies = fixtures::ten_rule_policies();
    let subjects: Vec<PolicySubject> = fixtures::agent_specs(8, 4)
        .into_iter()
        .map(|s| {
            let mut subject = PolicySubject::new(s.name, s.namespace).with_capabilities(&s.extra_capabilities);
            subject.cert_validity_seconds = Some(fixtures::AGENT_VALIDITY);
            subject
        })
        .collect();
    let now = unix_now();
    let started = Instant::now();
    let mut count = 0u64;
    while started.elapsed() < run_for {
        for subject in &subjects {
            black_box(evaluate(&EvaluationContext { subject: black_box(subject), phase: Phase::Admission, now }, &policies));
        }
        count += subjects.len() as u64;
    }
    count as f64 / started.elapsed().as_secs_f64()
}
