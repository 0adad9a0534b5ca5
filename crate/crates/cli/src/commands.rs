use std::future::Future;
use std::path::{Path, PathBuf};

use serde::Serialize;

use ans_client::{AgentIdentity, RegistryClient};
use ans_core::admission::{schema_check, validate_manifest};
use ans_core::attestation::create_capability;
use ans_core::identity::{unix_now, KeyPair};
use ans_core::manifest::parse_duration;
use ans_core::policy::{evaluate, explain, EvaluationContext, Phase, PolicySubject};
use ans_core::wire::ResolveParams;
use ans_core::{AgentRecord, AnsName, CertificateAuthority, ErrorCode, Label};
use ans_harness::{run_benchmark, run_demo, run_throughput, BenchConfig, DemoConfig, ThroughputConfig};
use ans_server::ServerConfig;

use crate::cli::{AdmissionCommand, CaCommand, CertCommand, Command, PhaseArg, PolicyCommand, QueryArgs};
use crate::config::{CliConfig, OutputFormat};
use crate::error::{CliError, Exit};
use crate::store::{self, KeyFile, CA_FILE};

pub fn run(config: &CliConfig, command: Command) -> Result<Exit, CliError> {
    match command {
        Command::Keygen { out, seed } => keygen(config, out, seed),
        Command::Ca { command: CaCommand::Init { force } } => ca_init(config, force),
        Command::Cert { command: CertCommand::Issue { name, key, capabilities, validity, endpoint, out } } => {
            cert_issue(config, &name, key.as_deref(), &capabilities, &validity, endpoint, out)
        }
        Command::Register { identity, namespace } => block_on(register(config, &identity, &namespace)),
        Command::Resolve(query) => block_on(resolve(config, query)),
        Command::Attest { identity, capability } => block_on(attest(config, &identity, capability)),
        Command::Policy { command: PolicyCommand::Test { manifest, name, namespace, capabilities, phase } } => {
            policy_test(config, manifest.as_deref(), name.as_deref(), &namespace, &capabilities, phase)
        }
        Command::Admission { command: AdmissionCommand::Validate { manifest, remote } } => {
            admission_validate(config, &manifest, remote)
        }
        Command::Serve { server_config, listen, log } => {
            block_on_threaded(serve(config, server_config.as_deref(), listen, log))
        }
        Command::Bench { agents, namespaces, duration, warmup, seed, throughput, throughput_seconds, report } => {
            let bench = BenchConfig {
                n_agents: agents,
                n_namespaces: namespaces,
                duration_seconds: duration,
                warmup_seconds: warmup,
                seed,
            };
            let throughput = throughput.then(|| ThroughputConfig {
                registration_seconds: throughput_seconds,
                ..ThroughputConfig::default()
            });
            block_on_threaded(bench_cmd(config, bench, throughput, report))
        }
        Command::Demo { agents, namespaces, seed, report } => {
            let demo = DemoConfig { n_agents: agents, n_namespaces: namespaces, seed };
            block_on_threaded(demo_cmd(config, demo, report))
        }
    }
}

fn block_on<F: Future<Output = Result<Exit, CliError>>>(f: F) -> Result<Exit, CliError> {
    tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Other(e.to_string()))?
        .block_on(f)
}

fn block_on_threaded<F: Future<Output = Result<Exit, CliError>>>(f: F) -> Result<Exit, CliError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Other(e.to_string()))?
        .block_on(f)
}

/// Prints `value` as JSON, or `human` otherwise.
fn emit<T: Serialize>(config: &CliConfig, value: &T, human: impl FnOnce() -> String) {
    match config.output {
        OutputFormat::Json => println!("{}", serde_json::to_string_pretty(value).expect("outputs serialize")),
        OutputFormat::Human => {
            let text = human();
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
        }
    }
}

fn parse_name(text: &str) -> Result<AnsName, CliError> {
    text.parse().map_err(|e: ans_core::name::NameError| CliError::Coded { code: e.code(), message: format!("{text}: {e}") })
}

fn parse_label(text: &str) -> Result<Label, CliError> {
    Label::new(text).map_err(|e| CliError::Coded { code: e.code(), message: format!("{text}: {e}") })
}

fn client(config: &CliConfig) -> Result<RegistryClient, CliError> {
    RegistryClient::new(&config.registry_url).map_err(|e| CliError::Usage(format!("--registry: {e}")))
}

fn load_identity(path: &Path) -> Result<AgentIdentity, CliError> {
    AgentIdentity::load(path).map_err(|e| CliError::file(path, e))
}

fn keygen(config: &CliConfig, out: Option<PathBuf>, seed: Option<String>) -> Result<Exit, CliError> {
    let keys = match seed {
        Some(hex_seed) => {
            let bytes: [u8; 32] = hex::decode(&hex_seed)
                .ok()
                .and_then(|b| b.try_into().ok())
                .ok_or_else(|| CliError::Usage("--seed must be 64 hex characters".into()))?;
            KeyPair::from_seed(bytes)
        }
        None => KeyPair::generate(),
    };
    let out = out.unwrap_or_else(|| config.key_dir.join("agent.key.json"));
    let file = KeyFile::new(&keys);
    store::write_secret_json(&out, &file)?;
    #[derive(Serialize)]
    struct Generated<'a> {
        path: &'a Path,
        public_key: ans_core::PublicKey,
        did: ans_core::Did,
    }
    let shown = Generated { path: &out, public_key: file.public_key, did: file.did.clone() };
    emit(config, &shown, || format!("{}\nwrote {}", shown.did, out.display()));
    Ok(Exit::Ok)
}

fn ca_init(config: &CliConfig, force: bool) -> Result<Exit, CliError> {
    let ca_path = config.key_dir.join(CA_FILE);
    if ca_path.exists() && !force {
        return Err(CliError::Other(format!("{} exists; pass --force to replace it", ca_path.display())));
    }
    let ca = CertificateAuthority::init(unix_now());
    store::save_ca(&ca_path, &ca)?;
    store::write_json(&config.anchors_path, &[&ca.root])?;
    #[derive(Serialize)]
    struct Initialized<'a> {
        root_did: &'a ans_core::Did,
        intermediate_did: &'a ans_core::Did,
        ca_path: &'a Path,
        anchors_path: &'a Path,
    }
    let shown = Initialized {
        root_did: &ca.root.subject_did,
        intermediate_did: &ca.intermediate.subject_did,
        ca_path: &ca_path,
        anchors_path: &config.anchors_path,
    };
    emit(config, &shown, || {
        format!(
            "root {}\nintermediate {}\nwrote {} and {}",
            shown.root_did,
            shown.intermediate_did,
            ca_path.display(),
            config.anchors_path.display()
        )
    });
    Ok(Exit::Ok)
}

fn cert_issue(
    config: &CliConfig,
    name: &str,
    key: Option<&Path>,
    capabilities: &[String],
    validity: &str,
    endpoint: String,
    out: Option<PathBuf>,
) -> Result<Exit, CliError> {
    let name = parse_name(name)?;
    let validity = parse_duration(validity).ok_or_else(|| CliError::Usage(format!("--validity `{validity}`: expected e.g. 90d")))?;
    let extra = capabilities.iter().map(|c| parse_label(c)).collect::<Result<Vec<_>, _>>()?;
    let ca = store::load_ca(&config.key_dir.join(CA_FILE))?;
    let keys = match key {
        Some(path) => store::load_key(path)?,
        None => KeyPair::generate(),
    };
    let mut caps = vec![name.capability.clone()];
    caps.extend(extra.into_iter().filter(|c| *c != name.capability));
    caps.dedup();
    let secrets: Vec<_> = caps.into_iter().map(|c| create_capability(c).0).collect();
    let commitments = secrets.iter().map(|s| s.commitment()).collect();
    let chain = ca
        .issue_agent(keys.public_key(), name.clone(), commitments, unix_now(), validity)
        .map_err(|e| CliError::Coded { code: ErrorCode::WindowExceeded, message: e.to_string() })?;
    let identity = AgentIdentity::new(name.clone(), keys, chain, secrets, endpoint)?;
    let out = out.unwrap_or_else(|| config.key_dir.join(format!("{}.identity.json", name.agent_id)));
    identity.save(&out).map_err(|e| CliError::file(&out, e))?;
    emit(config, &identity.chain().agent, || {
        let cert = &identity.chain().agent;
        format!("issued serial {} to {}\n{}\nwrote {}", cert.serial, name, cert.subject_did, out.display())
    });
    Ok(Exit::Ok)
}

fn render_records(records: &[AgentRecord]) -> String {
    if records.is_empty() {
        return "no matching agents\n".into();
    }
    records
        .iter()
        .map(|r| format!("{}  {}  {}  expires {}\n", r.name, r.did, r.endpoint, r.expires_at))
        .collect()
}

async fn register(config: &CliConfig, identity: &Path, namespace: &str) -> Result<Exit, CliError> {
    let namespace = parse_label(namespace)?;
    let identity = load_identity(identity)?;
    let record = client(config)?.register(&identity.registration_request(namespace)).await?;
    emit(config, &record, || format!("registered {}", render_records(std::slice::from_ref(&record))));
    Ok(Exit::Ok)
}

async fn resolve(config: &CliConfig, q: QueryArgs) -> Result<Exit, CliError> {
    let params = ResolveParams {
        capability: q.capability,
        provider: q.provider,
        protocol: q.protocol,
        env: q.env,
        agent: q.agent,
        version: q.version,
    };
    params.to_query().map_err(|e| CliError::Coded { code: e.error, message: e.message })?;
    let records = client(config)?.resolve_params(&params).await?;
    emit(config, &records, || render_records(&records));
    Ok(Exit::Ok)
}

async fn attest(config: &CliConfig, identity: &Path, capability: Option<String>) -> Result<Exit, CliError> {
    let identity = load_identity(identity)?;
    let capability = match capability {
        Some(c) => parse_label(&c)?,
        None => identity.name().capability.clone(),
    };
    let response = client(config)?.attest_capability(&identity, &capability, unix_now()).await?;
    emit(config, &response, || {
        format!("{} {} `{}`", response.agent_name, if response.granted { "holds" } else { "was refused" }, response.capability)
    });
    Ok(if response.granted { Exit::Ok } else { Exit::Denied })
}

fn policy_test(
    config: &CliConfig,
    manifest: Option<&Path>,
    name: Option<&str>,
    namespace: &str,
    capabilities: &[String],
    phase: PhaseArg,
) -> Result<Exit, CliError> {
    let policies = store::load_policy(config.policy_path.as_deref())?;
    let subject = match (manifest, name) {
        (Some(path), _) => {
            let manifest = store::load_manifest(path)?;
            manifest.policy_subject().map_err(|v| CliError::Coded { code: v.code, message: v.message })?
        }
        (None, Some(name)) => {
            let extra = capabilities.iter().map(|c| parse_label(c)).collect::<Result<Vec<_>, _>>()?;
            PolicySubject::new(parse_name(name)?, parse_label(namespace)?).with_capabilities(&extra)
        }
        (None, None) => return Err(CliError::Usage("one of --manifest or --name is required".into())),
    };
    let phase = match phase {
        PhaseArg::Admission => Phase::Admission,
        PhaseArg::Runtime => Phase::Runtime,
    };
    let decision = evaluate(&EvaluationContext { subject: &subject, phase, now: unix_now() }, &policies);
    emit(config, &decision, || explain(&decision));
    Ok(if decision.allowed { Exit::Ok } else { Exit::Denied })
}

fn admission_validate(config: &CliConfig, manifest: &Path, remote: bool) -> Result<Exit, CliError> {
    let manifest = store::load_manifest(manifest)?;
    if let Err(violations) = schema_check(&manifest) {
        let message = violations.iter().map(|v| v.message.as_str()).collect::<Vec<_>>().join("; ");
        return Err(CliError::Coded { code: ErrorCode::Malformed, message });
    }
    let decision = if remote {
        block_on_decision(client(config)?.validate_manifest(&manifest))?
    } else {
        let policies = store::load_policy(config.policy_path.as_deref())?;
        let anchors = if manifest.spec.certificate.chain.is_some() {
            store::load_anchors(&config.anchors_path)?
        } else {
            ans_core::TrustAnchors::default()
        };
        validate_manifest(&manifest, &policies, &anchors, unix_now())
    };
    emit(config, &decision, || decision.explain());
    Ok(if decision.allowed { Exit::Ok } else { Exit::Denied })
}

fn block_on_decision<T>(f: impl Future<Output = Result<T, ans_client::ClientError>>) -> Result<T, CliError> {
    tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Other(e.to_string()))?
        .block_on(f)
        .map_err(CliError::from)
}

async fn serve(
    config: &CliConfig,
    server_config: Option<&Path>,
    listen: Option<std::net::SocketAddr>,
    log: Option<PathBuf>,
) -> Result<Exit, CliError> {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("ANS_LOG").unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .try_init();
    let mut server = match server_config {
        Some(path) => ServerConfig::load(path).map_err(|e| CliError::Usage(e.to_string()))?,
        None => ServerConfig::default(),
    };
    server.apply_process_env().map_err(|e| CliError::Usage(e.to_string()))?;
    server.anchors_path.get_or_insert_with(|| config.anchors_path.clone());
    if server.policy_path.is_none() {
        server.policy_path = config.policy_path.clone();
    }
    if let Some(addr) = listen {
        server.listen = addr;
    }
    if log.is_some() {
        server.log_path = log;
    }
    let handle = ans_server::serve(server)
        .await
        .map_err(|e| CliError::Coded { code: e.code(), message: e.to_string() })?;
    println!("listening on {}", handle.base_url());
    shutdown_signal().await;
    handle.shutdown().await.map_err(|e| CliError::Other(e.to_string()))?;
    Ok(Exit::Ok)
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        let mut term = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()).expect("signal handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    let _ = tokio::signal::ctrl_c().await;
}

fn write_report<T: Serialize>(path: Option<&Path>, report: &T) -> Result<(), CliError> {
    match path {
        Some(p) => store::write_json(p, report),
        None => Ok(()),
    }
}

async fn bench_cmd(
    config: &CliConfig,
    bench: BenchConfig,
    throughput: Option<ThroughputConfig>,
    report_path: Option<PathBuf>,
) -> Result<Exit, CliError> {
    bench.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let mut report = run_benchmark(&bench).await.map_err(|e| CliError::Other(e.to_string()))?;
    if let Some(t) = throughput {
        report.throughput = Some(run_throughput(&t).await.map_err(|e| CliError::Other(e.to_string()))?);
    }
    write_report(report_path.as_deref(), &report)?;
    emit(config, &report, || {
        let mut out = String::new();
        for (op, s) in &report.operations {
            out.push_str(&format!(
                "{op:<24} n={:<7} p50={:>8.3}ms p95={:>8.3}ms p99={:>8.3}ms\n",
                s.count, s.p50_ms, s.p95_ms, s.p99_ms
            ));
        }
        for b in &report.bounds {
            let p99 = b.p99_ms.map_or("none".into(), |p| format!("{p:.3}ms"));
            out.push_str(&format!("{} {} p99 {p99} <= {}ms\n", if b.pass { "ok  " } else { "FAIL" }, b.operation, b.bound_ms));
        }
        if let Some(t) = &report.throughput {
            out.push_str(&format!(
                "registrations {:.0}/min, resolves {:.0}/s, policy evaluations {:.0}/s\n",
                t.registration.per_min, t.resolves_per_sec, t.policy_evals_per_sec
            ));
        }
        out
    });
    Ok(if report.passed() { Exit::Ok } else { Exit::Operational })
}

async fn demo_cmd(config: &CliConfig, demo: DemoConfig, report_path: Option<PathBuf>) -> Result<Exit, CliError> {
    demo.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let report = run_demo(&demo).await.map_err(|e| CliError::Other(e.to_string()))?;
    write_report(report_path.as_deref(), &report)?;
    emit(config, &report, || {
        let mut out = format!(
            "{}/{} agents completed ({:.0}%)\nrogue manifest rejected: {}; registration: {}\nresolve answers unchanged after rejection: {} ({} queries)\n",
            report.completed,
            report.agents,
            report.success_rate * 100.0,
            report.invalid_manifest_rejected,
            report.invalid_registration,
            report.rollback_unchanged,
            report.queries_compared
        );
        for (phase, s) in &report.phases {
            out.push_str(&format!("{phase:<12} p50={:.3}ms p99={:.3}ms\n", s.p50_ms, s.p99_ms));
        }
        for f in &report.failures {
            out.push_str(&format!("failure: {f}\n"));
        }
        out
    });
    Ok(if report.passed() { Exit::Ok } else { Exit::Operational })
}

