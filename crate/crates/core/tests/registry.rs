mod common;

use std::io::Cursor;
use std::sync::Arc;

use ans_core::identity::{KeyPair, DAY_SECONDS};
use ans_core::name::{NameQuery, VersionReq};
use ans_core::policy::load_policies;
use ans_core::registry::{
    recover, recover_from_files, EventLog, LifecycleRequest, RecordStatus, Registry, RegistryConfig,
};
use ans_core::{AnsName, CertificateAuthority, ErrorCode};

use common::*;

fn registry() -> Registry {
    Registry::new(RegistryConfig::default())
}

#[test]
fn register_then_resolve_by_capability() {
    let ca = CertificateAuthority::init(T0);
    let reg = registry();
    let drift = Agent::new(&ca, DRIFT, &["statistical-analysis"], T0);
    let other = Agent::new(&ca, RETRAINER, &[], T0);
    let rec = reg.register(&drift.request("mlops-system"), &allow_all(), &ca.anchors(), T0 + 1).unwrap();
    reg.register(&other.request("mlops-system"), &allow_all(), &ca.anchors(), T0 + 1).unwrap();
    assert_eq!(rec.status, RecordStatus::Active);
    assert_eq!(rec.expires_at, T0 + 1 + 24 * 3600);
    assert_eq!(rec.did, drift.keys.did());

    let hits = reg.resolve(&NameQuery::capability(label("concept-drift-detection")), &allow_all(), T0 + 2);
    assert_eq!(hits.len(), 1);
    assert_eq!(hits[0].name.to_string(), DRIFT);
    // commitment capabilities are indexed too
    let hits = reg.resolve(&NameQuery::capability(label("statistical-analysis")), &allow_all(), T0 + 2);
    assert!(hits.is_empty(), "query capability compares against the name's capability field");
    assert!(reg.audit_index());
}

#[test]
fn duplicate_and_reregistration() {
    let ca = CertificateAuthority::init(T0);
    let reg = registry();
    let first = Agent::new(&ca, DRIFT, &[], T0);
    reg.register(&first.request("ns"), &allow_all(), &ca.anchors(), T0 + 1).unwrap();

    let impostor = Agent::new(&ca, DRIFT, &[], T0);
    let err = reg.register(&impostor.request("ns"), &allow_all(), &ca.anchors(), T0 + 2).unwrap_err();
    assert_eq!(err.code(), ErrorCode::DuplicateAgent);

    // same DID, fresh chain: replaces the record
    let rotated = Agent::with_keys(&ca, DRIFT.parse().unwrap(), first.keys.clone(), &["alert-generation"], T0 + 5);
    let rec = reg.register(&rotated.request("ns"), &allow_all(), &ca.anchors(), T0 + 6).unwrap();
    assert_eq!(rec.chain, rotated.chain);
    assert_eq!(reg.get(DRIFT).unwrap().commitments.len(), 2);
    assert_eq!(reg.last_seq(), 2);
    assert!(reg.audit_index());
}

#[test]
fn registration_failures_map_to_codes() {
    let ca = CertificateAuthority::init(T0);
    let reg = registry();
    let a = Agent::new(&ca, DRIFT, &[], T0);

    let mut req = a.request("ns");
    req.name = "a2a://Bad.name".into();
    assert_eq!(reg.register(&req, &allow_all(), &ca.anchors(), T0 + 1).unwrap_err().code(), ErrorCode::InvalidName);

    let other_ca = CertificateAuthority::init(T0);
    assert_eq!(
        reg.register(&a.request("ns"), &allow_all(), &other_ca.anchors(), T0 + 1).unwrap_err().code(),
        ErrorCode::UntrustedRoot
    );

    assert_eq!(
        reg.register(&a.request("ns"), &allow_all(), &ca.anchors(), T0 + 91 * DAY_SECONDS).unwrap_err().code(),
        ErrorCode::CertExpired
    );

    let mut req = a.request("ns");
    req.endpoint = "http://example.com/changed".into();
    assert_eq!(reg.register(&req, &allow_all(), &ca.anchors(), T0 + 1).unwrap_err().code(), ErrorCode::BadSignature);

    let req = ans_core::RegistrationRequest::signed(
        &a.keys,
        &RETRAINER.parse().unwrap(),
        "http://127.0.0.1:1/",
        a.chain.clone(),
        label("ns"),
    );
    assert_eq!(reg.register(&req, &allow_all(), &ca.anchors(), T0 + 1).unwrap_err().code(), ErrorCode::NameMismatch);

    let mut req = a.request("ns");
    req.endpoint = "not a url".into();
    req.request_signature = a.keys.sign(&req.signing_bytes());
    assert_eq!(reg.register(&req, &allow_all(), &ca.anchors(), T0 + 1).unwrap_err().code(), ErrorCode::Malformed);

    assert_eq!(reg.register(&a.request("ns"), &[], &ca.anchors(), T0 + 1).unwrap_err().code(), ErrorCode::PolicyDenied);
    assert_eq!(reg.last_seq(), 0);
}

#[test]
fn renew_rules() {
    let ca = CertificateAuthority::init(T0);
    let reg = registry();
    let a = Agent::new(&ca, DRIFT, &[], T0);
    let rec = reg.register(&a.request("ns"), &allow_all(), &ca.anchors(), T0).unwrap();

    let renewed = reg.renew(DRIFT, &LifecycleRequest::renew(&a.keys, &a.name, T0 + 100), T0 + 100).unwrap();
    assert!(renewed.expires_at > rec.expires_at);
    assert_eq!(reg.get(DRIFT).unwrap().expires_at, renewed.expires_at);

    let err = reg.renew(RETRAINER, &LifecycleRequest::renew(&a.keys, &a.name, T0 + 100), T0 + 100).unwrap_err();
    assert_eq!(err.code(), ErrorCode::UnknownAgent);

    let err = reg.renew(DRIFT, &LifecycleRequest::renew(&KeyPair::generate(), &a.name, T0 + 100), T0 + 100).unwrap_err();
    assert_eq!(err.code(), ErrorCode::BadSignature);

    let err = reg.renew(DRIFT, &LifecycleRequest::renew(&a.keys, &a.name, T0), T0 + 1000).unwrap_err();
    assert_eq!(err.code(), ErrorCode::BadSignature);

    reg.revoke(DRIFT, &LifecycleRequest::revoke(&a.keys, &a.name, T0 + 200), T0 + 200).unwrap();
    let err = reg.renew(DRIFT, &LifecycleRequest::renew(&a.keys, &a.name, T0 + 300), T0 + 300).unwrap_err();
    assert_eq!(err.code(), ErrorCode::Revoked);
}

#[test]
fn revoke_rules() {
    let ca = CertificateAuthority::init(T0);
    let reg = registry();
    let a = Agent::new(&ca, DRIFT, &[], T0);
    let b = Agent::new(&ca, RETRAINER, &[], T0);
    reg.register(&a.request("ns"), &allow_all(), &ca.anchors(), T0).unwrap();
    reg.register(&b.request("ns"), &allow_all(), &ca.anchors(), T0).unwrap();

    let err = reg.revoke(DRIFT, &LifecycleRequest::revoke(&KeyPair::generate(), &a.name, T0 + 1), T0 + 1).unwrap_err();
    assert_eq!(err.code(), ErrorCode::BadSignature);
    let err = reg.revoke(DRIFT, &LifecycleRequest::revoke(&b.keys, &a.name, T0 + 1), T0 + 1).unwrap_err();
    assert_eq!(err.code(), ErrorCode::BadSignature);

    let ack = reg.revoke(DRIFT, &LifecycleRequest::revoke(&a.keys, &a.name, T0 + 1), T0 + 1).unwrap();
    assert_eq!(ack.by, a.keys.did());
    assert!(reg.resolve(&NameQuery::capability(label("concept-drift-detection")), &allow_all(), T0 + 2).is_empty());

    let ack = reg
        .revoke(RETRAINER, &LifecycleRequest::revoke(&ca.intermediate_keys, &b.name, T0 + 3), T0 + 3)
        .unwrap();
    assert_eq!(ack.by, ca.intermediate.subject_did);
    assert_eq!(reg.get(RETRAINER).unwrap().status, RecordStatus::Revoked);

    let err = reg.revoke(SCANNER, &LifecycleRequest::revoke(&a.keys, &a.name, T0 + 3), T0 + 3).unwrap_err();
    assert_eq!(err.code(), ErrorCode::UnknownAgent);

    // idempotent: no extra event
    let seq = reg.last_seq();
    reg.revoke(DRIFT, &LifecycleRequest::revoke(&a.keys, &a.name, T0 + 4), T0 + 4).unwrap();
    assert_eq!(reg.last_seq(), seq);
    assert!(reg.audit_index());

    // a revoked name can be taken by a new identity
    let c = Agent::new(&ca, DRIFT, &[], T0);
    reg.register(&c.request("ns"), &allow_all(), &ca.anchors(), T0 + 5).unwrap();
}

#[test]
fn latest_version_and_ordering() {
    let ca = CertificateAuthority::init(T0);
    let reg = registry();
    let names = [
        "a2a://drift.concept-drift-detection.research-lab.v1.0.prod",
        "a2a://drift.concept-drift-detection.research-lab.v2.1.prod",
        "a2a://drift.concept-drift-detection.research-lab.v2.1.staging",
        "a2a://alpha.concept-drift-detection.research-lab.v2.1.prod",
    ];
    for n in names {
        reg.register(&Agent::new(&ca, n, &[], T0).request("ns"), &allow_all(), &ca.anchors(), T0).unwrap();
    }
    let all = reg.resolve(&NameQuery::capability(label("concept-drift-detection")), &allow_all(), T0);
    let rendered: Vec<String> = all.iter().map(|r| r.name.to_string()).collect();
    assert_eq!(rendered, vec![names[3].to_string(), names[1].into(), names[2].into(), names[0].into()]);

    let q = NameQuery {
        agent_id: Some(label("drift")),
        extension: Some(label("prod")),
        version_req: Some(VersionReq::Latest),
        ..Default::default()
    };
    let latest = reg.resolve(&q, &allow_all(), T0);
    assert_eq!(latest.len(), 1);
    assert_eq!(latest[0].name.to_string(), names[1]);

    let q = NameQuery { capability: Some(label("concept-drift-detection")), version_req: Some(VersionReq::Latest), ..Default::default() };
    assert_eq!(reg.resolve(&q, &allow_all(), T0).len(), 3);
}

#[test]
fn runtime_policy_filters_resolution() {
    let ca = CertificateAuthority::init(T0);
    let reg = registry();
    reg.register(&Agent::new(&ca, DRIFT, &[], T0).request("ns"), &allow_all(), &ca.anchors(), T0).unwrap();
    reg.register(&Agent::new(&ca, SCANNER, &[], T0).request("ns"), &allow_all(), &ca.anchors(), T0).unwrap();
    let strict = load_policies(
        r#"{"policies":[{"id":"p","rules":[
            {"id":"allow","effect":"allow"},
            {"id":"no-hipaa","effect":"deny","match":{"environment":"hipaa"}}]}]}"#,
    )
    .unwrap();
    let q = NameQuery { version_req: Some(VersionReq::AtLeast("1.0".parse().unwrap())), ..Default::default() };
    assert_eq!(reg.resolve(&q, &allow_all(), T0).len(), 2);
    let hits = reg.resolve(&q, &strict, T0);
    assert_eq!(hits.len(), 1);
    assert_eq!(hits[0].name.to_string(), DRIFT);
}

#[test]
fn expiry_and_sweep() {
    let ca = CertificateAuthority::init(T0);
    let reg = Registry::new(RegistryConfig { record_ttl: 100 });
    let q = NameQuery { version_req: Some(VersionReq::AtLeast("0.0".parse().unwrap())), ..Default::default() };
    for (i, n) in [DRIFT, RETRAINER, SCANNER].into_iter().enumerate() {
        let at = T0 + 50 * i as i64;
        reg.register(&Agent::new(&ca, n, &[], T0).request("ns"), &allow_all(), &ca.anchors(), at).unwrap();
    }
    assert_eq!(reg.sweep_expired(T0 + 100), 0);
    let before = reg.resolve(&q, &allow_all(), T0 + 120);
    assert_eq!(before.len(), 2, "first record expired at T0+100");
    assert_eq!(reg.sweep_expired(T0 + 120), 1);
    assert_eq!(reg.resolve(&q, &allow_all(), T0 + 120), before);
    assert_eq!(reg.sweep_expired(T0 + 120), 0);
    assert!(reg.audit_index());
    // an expired name is free for another identity
    let newcomer = Agent::new(&ca, RETRAINER, &[], T0);
    assert!(reg.register(&newcomer.request("ns"), &allow_all(), &ca.anchors(), T0 + 151).is_ok());
}

#[test]
fn snapshot_plus_log_recovery() {
    let dir = tempfile::tempdir().unwrap();
    let log_path = dir.path().join("events.jsonl");
    let snap_path = dir.path().join("snapshot.json");
    let ca = CertificateAuthority::init(T0);
    let reg = Registry::open(RegistryConfig::default(), &log_path, None, true).unwrap();
    let name = |i: usize| format!("a2a://agent-{i}.shared-cap.team.v1.{i}.prod");
    for i in 0..10 {
        reg.register(&Agent::new(&ca, &name(i), &[], T0).request("ns"), &allow_all(), &ca.anchors(), T0).unwrap();
    }
    assert_eq!(reg.write_snapshot(&snap_path).unwrap(), 10);
    for i in 10..15 {
        reg.register(&Agent::new(&ca, &name(i), &[], T0).request("ns"), &allow_all(), &ca.anchors(), T0).unwrap();
    }
    let q = NameQuery::capability(label("shared-cap"));
    let live = reg.resolve(&q, &allow_all(), T0 + 1);
    drop(reg);

    let recovered = Registry::open(RegistryConfig::default(), &log_path, Some(&snap_path), true).unwrap();
    let again = recovered.resolve(&q, &allow_all(), T0 + 1);
    assert_eq!(again.len(), 15);
    assert_eq!(again, live);
    assert_eq!(recovered.last_seq(), 15);
    assert!(recovered.audit_index());

    // the log alone reproduces the same state
    let from_log = recover_from_files(None, Some(&log_path)).unwrap();
    assert_eq!(from_log.resolve(&q, &allow_all(), T0 + 1), live);
}

#[test]
fn empty_log_and_gap() {
    let state = recover(None, Cursor::new("")).unwrap();
    assert!(state.is_empty());
    assert_eq!(state.last_seq(), 0);

    let dir = tempfile::tempdir().unwrap();
    let log_path = dir.path().join("events.jsonl");
    let ca = CertificateAuthority::init(T0);
    {
        let reg = Registry::open(RegistryConfig::default(), &log_path, None, false).unwrap();
        for n in [DRIFT, RETRAINER, SCANNER] {
            reg.register(&Agent::new(&ca, n, &[], T0).request("ns"), &allow_all(), &ca.anchors(), T0).unwrap();
        }
    }
    let text = std::fs::read_to_string(&log_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let gapped = format!("{}\n{}\n", lines[0], lines[2]);
    let err = recover(None, Cursor::new(gapped)).unwrap_err();
    assert_eq!(err.code(), ErrorCode::LogCorrupt);
    assert_eq!(err.corrupt.line, 2);
    assert_eq!(err.state.last_seq(), 1);

    let truncated = format!("{}\n{}", lines[0], &lines[1][..lines[1].len() / 2]);
    let err = recover(None, Cursor::new(truncated)).unwrap_err();
    assert_eq!(err.corrupt.line, 2);

    std::fs::write(&log_path, format!("{}\n{}\n", lines[0], lines[2])).unwrap();
    let err = Registry::open(RegistryConfig::default(), &log_path, None, false).err().unwrap();
    assert_eq!(err.code(), ErrorCode::LogCorrupt);
}

#[test]
fn event_log_lines_are_canonical() {
    let dir = tempfile::tempdir().unwrap();
    let log_path = dir.path().join("events.jsonl");
    let ca = CertificateAuthority::init(T0);
    let reg = Registry::with_state(
        RegistryConfig::default(),
        Default::default(),
        Some(EventLog::open(&log_path, false).unwrap()),
    );
    let a = Agent::new(&ca, DRIFT, &[], T0);
    reg.register(&a.request("ns"), &allow_all(), &ca.anchors(), T0).unwrap();
    reg.renew(DRIFT, &LifecycleRequest::renew(&a.keys, &a.name, T0 + 5), T0 + 5).unwrap();
    reg.revoke(DRIFT, &LifecycleRequest::revoke(&a.keys, &a.name, T0 + 6), T0 + 6).unwrap();
    let text = std::fs::read_to_string(&log_path).unwrap();
    let kinds: Vec<String> = text
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["kind"].as_str().unwrap().to_owned())
        .collect();
    assert_eq!(kinds, ["Registered", "Renewed", "Revoked"]);
    assert!(text.lines().next().unwrap().starts_with("{\"at\":"));
}

#[test]
fn concurrent_uniqueness_and_reads() {
    let ca = Arc::new(CertificateAuthority::init(T0));
    let reg = Arc::new(registry());
    let contenders: Vec<Agent> = (0..8).map(|_| Agent::new(&ca, DRIFT, &[], T0)).collect();
    let requests: Vec<_> = contenders.iter().map(|a| a.request("ns")).collect();
    let handles: Vec<_> = requests
        .into_iter()
        .map(|req| {
            let (reg, ca) = (reg.clone(), ca.clone());
            std::thread::spawn(move || reg.register(&req, &allow_all(), &ca.anchors(), T0).is_ok())
        })
        .collect();
    let readers: Vec<_> = (0..4)
        .map(|_| {
            let reg = reg.clone();
            std::thread::spawn(move || {
                for _ in 0..200 {
                    let hits = reg.resolve(&NameQuery::capability(label("concept-drift-detection")), &allow_all(), T0);
                    assert!(hits.len() <= 1);
                }
            })
        })
        .collect();
    let winners = handles.into_iter().map(|h| h.join().unwrap()).filter(|ok| *ok).count();
    for r in readers {
        r.join().unwrap();
    }
    assert_eq!(winners, 1);
    assert_eq!(reg.last_seq(), 1);
    let name: AnsName = DRIFT.parse().unwrap();
    assert_eq!(reg.get(&name.to_string()).unwrap().status, RecordStatus::Active);
}
