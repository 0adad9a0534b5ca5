mod common;

use std::sync::Arc;

use reqwest::StatusCode;
use serde_json::{json, Value};

use ans_core::attestation::{prove, Challenge};
use ans_core::identity::{KeyPair, DAY_SECONDS};
use ans_core::registry::{AgentRecord, LifecycleRequest, Registry, RegistryConfig};
use ans_core::wire::{ApiError, AttestResponse, ChallengeRequest};
use ans_core::ErrorCode;
use ans_server::metrics::parse_exposition;
use ans_server::ServeOptions;

use common::*;

async fn post<T: serde::Serialize>(s: &TestServer, path: &str, body: &T) -> reqwest::Response {
    s.http.post(s.url(path)).json(body).send().await.unwrap()
}

async fn get(s: &TestServer, path: &str) -> reqwest::Response {
    s.http.get(s.url(path)).send().await.unwrap()
}

async fn expect_error(resp: reqwest::Response, status: u16, code: ErrorCode) -> ApiError {
    assert_eq!(resp.status().as_u16(), status);
    let err: ApiError = resp.json().await.unwrap();
    assert_eq!(err.error, code);
    err
}

#[tokio::test]
async fn healthz() {
    let s = TestServer::start().await;
    let resp = get(&s, "/v1/healthz").await;
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.text().await.unwrap(), "ok");
}

#[tokio::test]
async fn register_resolve_and_conflicts() {
    let s = TestServer::start().await;
    let drift = Agent::standard(&s.ca, DRIFT);
    let resp = post(&s, "/v1/agents", &drift.request()).await;
    assert_eq!(resp.status(), StatusCode::CREATED);
    let text = resp.text().await.unwrap();
    let record: AgentRecord = serde_json::from_str(&text).unwrap();
    assert_eq!(record.registered_at, s.now());
    assert_eq!(record.expires_at, s.now() + 86_400);
    // wire round trip: re-encoding the parsed value gives the same document
    let reparsed: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_value(&record).unwrap(), reparsed);
    assert_eq!(s.handle.state().registry().get(DRIFT).unwrap(), record);

    let hits: Vec<AgentRecord> = get(&s, "/v1/resolve?capability=concept-drift-detection").await.json().await.unwrap();
    assert_eq!(hits, vec![record.clone()]);

    let impostor = Agent::standard(&s.ca, DRIFT);
    expect_error(post(&s, "/v1/agents", &impostor.request()).await, 409, ErrorCode::DuplicateAgent).await;

    let shell = Agent::standard(&s.ca, "mcp://runner.shell-exec.research-lab.v1.0.prod");
    let err = expect_error(post(&s, "/v1/agents", &shell.request()).await, 403, ErrorCode::PolicyDenied).await;
    let explain = err.details.unwrap()["explain"].as_str().unwrap().to_owned();
    assert!(explain.starts_with("decision: DENIED"));
    assert!(explain.contains("deny agent-security-policy/no-shell"));

    let mut bad = drift.request();
    bad.name = "A2A://nope".into();
    expect_error(post(&s, "/v1/agents", &bad).await, 400, ErrorCode::InvalidName).await;

    let resp = s.http.post(s.url("/v1/agents")).header("content-type", "application/json").body("{").send().await.unwrap();
    expect_error(resp, 400, ErrorCode::Malformed).await;
}

#[tokio::test]
async fn resolve_versions_and_bad_params() {
    let s = TestServer::start().await;
    for v in ["1.0", "2.1"] {
        let a = Agent::standard(&s.ca, &format!("a2a://drift.concept-drift-detection.research-lab.v{v}.prod"));
        assert_eq!(post(&s, "/v1/agents", &a.request()).await.status(), StatusCode::CREATED);
    }
    let all: Vec<AgentRecord> = get(&s, "/v1/resolve?capability=concept-drift-detection").await.json().await.unwrap();
    assert_eq!(all.len(), 2);
    let latest: Vec<AgentRecord> =
        get(&s, "/v1/resolve?capability=concept-drift-detection&version=latest").await.json().await.unwrap();
    assert_eq!(latest.len(), 1);
    assert_eq!(latest[0].name.version.to_string(), "2.1");
    let at_least: Vec<AgentRecord> = get(&s, "/v1/resolve?agent=drift&version=%3E%3D2.0").await.json().await.unwrap();
    assert_eq!(at_least.len(), 1);
    let none: Vec<AgentRecord> = get(&s, "/v1/resolve?provider=mlops-team").await.json().await.unwrap();
    assert!(none.is_empty());

    expect_error(get(&s, "/v1/resolve?protocol=xyz").await, 400, ErrorCode::InvalidProtocol).await;
    expect_error(get(&s, "/v1/resolve").await, 400, ErrorCode::InvalidName).await;
    expect_error(get(&s, "/v1/resolve?capability=Not_A_Label").await, 400, ErrorCode::InvalidName).await;
}

#[tokio::test]
async fn renew_and_revoke() {
    let s = TestServer::start().await;
    let a = Agent::standard(&s.ca, DRIFT);
    let first: AgentRecord = post(&s, "/v1/agents", &a.request()).await.json().await.unwrap();
    let path = format!("/v1/agents/{}", segment(DRIFT));

    s.set_now(T0 + 1000);
    let resp = post(&s, &format!("{path}/renew"), &LifecycleRequest::renew(&a.keys, &a.name, s.now())).await;
    assert_eq!(resp.status(), StatusCode::OK);
    let renewed: AgentRecord = resp.json().await.unwrap();
    assert!(renewed.expires_at > first.expires_at);

    let wrong = LifecycleRequest::revoke(&KeyPair::generate(), &a.name, s.now());
    let resp = s.http.delete(s.url(&path)).json(&wrong).send().await.unwrap();
    expect_error(resp, 401, ErrorCode::BadSignature).await;

    let resp = s.http.delete(s.url(&path)).json(&LifecycleRequest::revoke(&a.keys, &a.name, s.now())).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let hits: Vec<AgentRecord> = get(&s, "/v1/resolve?capability=concept-drift-detection").await.json().await.unwrap();
    assert!(hits.is_empty());

    let resp = post(&s, &format!("{path}/renew"), &LifecycleRequest::renew(&a.keys, &a.name, s.now())).await;
    expect_error(resp, 403, ErrorCode::Revoked).await;
    let missing = format!("/v1/agents/{}/renew", segment("a2a://ghost.x.y.v1.0.prod"));
    expect_error(post(&s, &missing, &LifecycleRequest::renew(&a.keys, &a.name, s.now())).await, 404, ErrorCode::UnknownAgent)
        .await;
}

#[tokio::test]
async fn attestation_flow() {
    let s = TestServer::start().await;
    let a = Agent::new(&s.ca, DRIFT, &["statistical-analysis"], T0, 90 * DAY_SECONDS);
    post(&s, "/v1/agents", &a.request()).await;

    let ch: Challenge = post(&s, "/v1/challenge", &ChallengeRequest { agent_name: a.name.clone() }).await.json().await.unwrap();
    assert_eq!(ch.expires_at - ch.issued_at, 60);
    let proof = prove(&ch, &a.secrets[1], &a.keys, &a.name, s.now()).unwrap();
    let resp = post(&s, "/v1/attest", &proof).await;
    assert_eq!(resp.status(), StatusCode::OK);
    let ok: AttestResponse = resp.json().await.unwrap();
    assert!(ok.granted);
    assert_eq!(ok.capability.as_str(), "statistical-analysis");

    expect_error(post(&s, "/v1/attest", &proof).await, 401, ErrorCode::NonceReplay).await;

    // a capability the certificate never committed to
    let ch: Challenge = post(&s, "/v1/challenge", &ChallengeRequest { agent_name: a.name.clone() }).await.json().await.unwrap();
    let (rogue, _) = ans_core::attestation::create_capability(label("alert-generation"));
    let proof = prove(&ch, &rogue, &a.keys, &a.name, s.now()).unwrap();
    expect_error(post(&s, "/v1/attest", &proof).await, 403, ErrorCode::CapabilityMismatch).await;

    // expired challenge
    let proof = prove(&ch, &a.secrets[0], &a.keys, &a.name, s.now()).unwrap();
    s.set_now(ch.expires_at + 1);
    expect_error(post(&s, "/v1/attest", &proof).await, 401, ErrorCode::ChallengeExpired).await;

    let ghost = ChallengeRequest { agent_name: "a2a://ghost.x.y.v1.0.prod".parse().unwrap() };
    expect_error(post(&s, "/v1/challenge", &ghost).await, 404, ErrorCode::UnknownAgent).await;

    let text = get(&s, "/v1/metrics").await.text().await.unwrap();
    let m = parse_exposition(&text);
    assert_eq!(m["attestations_total"], 4.0);
    assert_eq!(m["auth_failures_total"], 3.0);
    assert_eq!(m["operation_latency_seconds_count{operation=\"attestation\"}"], 4.0);
    // 3 of 4 failed: far above the 5% threshold
    assert!(text.contains("alert_firing{rule=\"auth_error_rate\",severity=\"critical\",subject=\"attestation\"} 1"));
}

fn listing_manifest() -> Value {
    json!({
        "apiVersion": "ans.io/v1",
        "kind": "Agent",
        "metadata": {"name": "concept-drift-detector", "namespace": "mlops-system"},
        "spec": {
            "ansName": DRIFT,
            "capabilities": ["concept-drift-detection", "statistical-analysis", "alert-generation"],
            "provider": "research-lab",
            "version": "2.1",
            "environment": "prod",
            "certificate": {"issuer": "ans-ca", "validity": "90d"},
            "policies": ["agent-security-policy", "data-access-policy"]
        }
    })
}

#[tokio::test]
async fn admission_decisions_and_purity() {
    let s = TestServer::start().await;
    let registered = Agent::standard(&s.ca, "mcp://model-retrainer.model-training.mlops-team.v1.0.staging");
    post(&s, "/v1/agents", &registered.request()).await;
    let seq_before = s.handle.state().registry().last_seq();
    let resolve_before = get(&s, "/v1/resolve?env=staging").await.text().await.unwrap();

    let agent = Agent::new(&s.ca, DRIFT, &["statistical-analysis", "alert-generation"], T0, 90 * DAY_SECONDS);
    let mut manifest = listing_manifest();
    manifest["spec"]["certificate"]["chain"] = serde_json::to_value(&agent.chain).unwrap();
    let decision: Value = post(&s, "/v1/admission/validate", &manifest).await.json().await.unwrap();
    assert_eq!(decision["allowed"], true, "{decision}");
    assert!(!decision["matched_rules"].as_array().unwrap().is_empty());

    let mut m = listing_manifest();
    m["spec"]["capabilities"] = json!(["statistical-analysis"]);
    let d: Value = post(&s, "/v1/admission/validate", &m).await.json().await.unwrap();
    assert_eq!(d["allowed"], false);
    assert!(d["reasons"][0].as_str().unwrap().starts_with("NAME_MISMATCH"));

    let mut m = listing_manifest();
    m["spec"]["ansName"] = json!("a2a://concept-drift-detector.concept-drift-detection.research-lab.v2.1.staging");
    let d: Value = post(&s, "/v1/admission/validate", &m).await.json().await.unwrap();
    assert_eq!(d["allowed"], false);

    let mut m = listing_manifest();
    m["spec"]["policies"] = json!(["missing-policy"]);
    let d: Value = post(&s, "/v1/admission/validate", &m).await.json().await.unwrap();
    assert_eq!(d["allowed"], false);

    // chain from an untrusted authority
    let stranger = ans_core::CertificateAuthority::init(T0);
    let other = Agent::new(&stranger, DRIFT, &[], T0, 90 * DAY_SECONDS);
    let mut m = listing_manifest();
    m["spec"]["certificate"]["chain"] = serde_json::to_value(&other.chain).unwrap();
    let d: Value = post(&s, "/v1/admission/validate", &m).await.json().await.unwrap();
    assert_eq!(d["allowed"], false);
    assert_eq!(d["violations"][0]["code"], "UNTRUSTED_ROOT");

    let mut m = listing_manifest();
    m["apiVersion"] = json!("v2");
    expect_error(post(&s, "/v1/admission/validate", &m).await, 400, ErrorCode::Malformed).await;
    expect_error(post(&s, "/v1/admission/validate", &json!({"kind": "Agent"})).await, 400, ErrorCode::Malformed).await;

    assert_eq!(s.handle.state().registry().last_seq(), seq_before);
    assert_eq!(get(&s, "/v1/resolve?env=staging").await.text().await.unwrap(), resolve_before);
}

#[tokio::test]
async fn metrics_are_monotonic_and_counted() {
    let s = TestServer::start().await;
    let scrape = || async { parse_exposition(&get(&s, "/v1/metrics").await.text().await.unwrap()) };
    let empty = scrape().await;
    assert_eq!(empty["registrations_total"], 0.0);
    assert!(!empty.keys().any(|k| k.starts_with("alert_firing")), "no traffic, no alerts");

    let mut previous = empty;
    let mut resolves = 0;
    for i in 0..5 {
        let a = Agent::standard(&s.ca, &format!("a2a://agent-{i}.concept-drift-detection.research-lab.v1.0.prod"));
        post(&s, "/v1/agents", &a.request()).await;
        for _ in 0..=i {
            get(&s, "/v1/resolve?capability=concept-drift-detection").await;
            resolves += 1;
        }
        let now = scrape().await;
        for (k, v) in &previous {
            if k.ends_with("_total") || k.contains("_count") {
                assert!(now[k] >= *v, "{k} decreased");
            }
        }
        previous = now;
    }
    assert_eq!(previous["registrations_total"], 5.0);
    assert_eq!(previous["operation_latency_seconds_count{operation=\"registration\"}"], 5.0);
    assert_eq!(previous["operation_latency_seconds_count{operation=\"chain_validation\"}"], 5.0);
    assert_eq!(previous["operation_latency_seconds_count{operation=\"discovery\"}"], resolves as f64);
    assert_eq!(previous["discovery_queries_total"], resolves as f64);
    assert_eq!(previous["active_agents"], 5.0);
}

#[tokio::test]
async fn expiring_certificates_raise_alerts() {
    let s = TestServer::start().await;
    let now = s.now();
    // certificates with 29 and 31 days left at the server's clock
    let near = Agent::new(&s.ca, "a2a://near.cap.research-lab.v1.0.prod", &[], T0, now - T0 + 29 * DAY_SECONDS);
    let far = Agent::new(&s.ca, "a2a://far.cap.research-lab.v1.0.prod", &[], T0, now - T0 + 31 * DAY_SECONDS);
    post(&s, "/v1/agents", &near.request()).await;
    post(&s, "/v1/agents", &far.request()).await;
    let alerts = s.handle.state().alerts();
    assert_eq!(alerts.len(), 1);
    assert_eq!(alerts[0].rule, "cert_expiry");
    assert_eq!(alerts[0].subject, near.name.to_string());
    let m = parse_exposition(&get(&s, "/v1/metrics").await.text().await.unwrap());
    assert_eq!(m["certs_expiring_within_30d"], 1.0);
}

#[tokio::test]
async fn restart_recovers_and_snapshots_on_shutdown() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    let snap = dir.path().join("snapshot.json");
    let ca = ans_core::CertificateAuthority::init(T0);
    let registry = Arc::new(Registry::open(RegistryConfig::default(), &log, Some(&snap), true).unwrap());
    let options = ServeOptions { snapshot_path: Some(snap.clone()), ..Default::default() };
    let s = TestServer::start_with_options(ca.clone(), registry, options).await;
    for i in 0..3 {
        let a = Agent::standard(&ca, &format!("a2a://agent-{i}.cap.research-lab.v1.0.prod"));
        assert_eq!(post(&s, "/v1/agents", &a.request()).await.status(), StatusCode::CREATED);
    }
    let before = get(&s, "/v1/resolve?capability=cap").await.text().await.unwrap();
    s.handle.shutdown().await.unwrap();
    let written: ans_core::registry::Snapshot = serde_json::from_str(&std::fs::read_to_string(&snap).unwrap()).unwrap();
    assert_eq!(written.last_seq, 3);

    let reopened = Arc::new(Registry::open(RegistryConfig::default(), &log, Some(&snap), true).unwrap());
    assert_eq!(reopened.last_seq(), 3);
    let s = TestServer::start_with(ca, reopened).await;
    assert_eq!(get(&s, "/v1/resolve?capability=cap").await.text().await.unwrap(), before);
}
