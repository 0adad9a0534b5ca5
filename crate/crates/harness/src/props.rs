//! Randomized property suites over the core invariants, each checked
//! against an independent model.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRng, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use ans_core::attestation::{prove, verify, CapabilityCommitment, CapabilitySecret, ChallengeStore};
use ans_core::canonical;
use ans_core::identity::{derive_did, validate_chain, CertRole, KeyPair, PublicKey, Timestamp, DAY_SECONDS};
use ans_core::policy::{evaluate, Effect, EvaluationContext, Phase, Policy, PolicyRule, PolicySubject, RuleMatch};
use ans_core::registry::{recover, AgentRecord, EventKind, RecordStatus, RegistryEvent, RegistryState};
use ans_core::{AnsName, CertificateAuthority, CertificateChain, Label, NameQuery, Protocol, Version, VersionReq};

use crate::fixtures;

pub const MIN_CASES: u32 = 1_000;
const T0: Timestamp = 1_760_000_000;
const NOW: Timestamp = T0 + DAY_SECONDS;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub cases: u32,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub elapsed_seconds: f64,
}

fn run_suite<S: Strategy>(
    name: &str,
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> SuiteResult {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    let rng = TestRng::deterministic_rng(config.rng_algorithm);
    let mut runner = TestRunner::new_with_rng(config, rng);
    let started = Instant::now();
    let outcome = runner.run(&strategy, test);
    SuiteResult {
        name: name.into(),
        cases,
        passed: outcome.is_ok(),
        failure: outcome.err().map(|e| e.to_string()),
        elapsed_seconds: started.elapsed().as_secs_f64(),
    }
}

pub fn run_all(cases: u32) -> Vec<SuiteResult> {
    vec![
        chain_mutation(cases),
        attestation(cases),
        policy(cases),
        resolve_oracle(cases),
        recovery(cases),
    ]
}

fn label(s: &str) -> Label {
    Label::new(s).expect("valid label")
}

struct Pki {
    ca: CertificateAuthority,
    chain: CertificateChain,
}

fn pki() -> Pki {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ca = fixtures::seeded_ca(&mut rng, T0);
    let spec = &fixtures::agent_specs(1, 1)[0];
    let id = fixtures::seeded_identity(&ca, spec, &mut rng, T0, fixtures::AGENT_VALIDITY);
    Pki { chain: id.chain().clone(), ca }
}

/// Changing any one field of any certificate in a valid chain makes it
/// invalid.
pub fn chain_mutation(cases: u32) -> SuiteResult {
    let Pki { ca, chain } = pki();
    let anchors = ca.anchors();
    assert!(validate_chain(&chain, &anchors, NOW).is_ok(), "fixture chain is valid");
    let strategy = (0usize..3, 0usize..10, any::<u64>(), any::<[u8; 32]>());
    run_suite("chain mutation", cases, strategy, |(which, field, x, bytes)| {
        let mut mutated = chain.clone();
        let cert = match which {
            0 => &mut mutated.agent,
            1 => &mut mutated.intermediate,
            _ => &mut mutated.root,
        };
        let delta = (x % 1_000_000) as i64 + 1;
        let sign = if x & (1 << 40) == 0 { 1 } else { -1 };
        match field {
            0 => cert.serial ^= x | 1,
            1 => cert.subject_did = derive_did(&PublicKey(bytes)),
            2 => {
                cert.subject_name = match cert.subject_name {
                    Some(_) if x % 2 == 0 => None,
                    _ => Some("acp://intruder.payment-execution.evil-corp.v6.6.prod".parse().expect("valid name")),
                }
            }
            3 => cert.issuer_did = derive_did(&PublicKey(bytes)),
            4 => cert.public_key = PublicKey(bytes),
            5 => cert.not_before += sign * delta,
            6 => cert.not_after += sign * delta,
            7 => {
                cert.role = match (cert.role, x % 2) {
                    (CertRole::Root, 0) | (CertRole::Agent, 1) => CertRole::Intermediate,
                    (CertRole::Intermediate, 0) | (CertRole::Root, 1) => CertRole::Agent,
                    _ => CertRole::Root,
                }
            }
            8 => {
                let extra = CapabilityCommitment { capability: label("smuggled"), commitment_key: PublicKey(bytes) };
                if cert.capability_commitments.is_empty() || x % 3 == 0 {
                    cert.capability_commitments.push(extra);
                } else if x % 3 == 1 {
                    cert.capability_commitments.pop();
                } else {
                    cert.capability_commitments[0].commitment_key = PublicKey(bytes);
                }
            }
            _ => cert.signature.0[(x % 64) as usize] ^= 1 << (x % 8),
        }
        prop_assume!(mutated != chain);
        prop_assert!(
            validate_chain(&mutated, &anchors, NOW).is_err(),
            "mutating field {field} of certificate {which} left the chain valid"
        );
        Ok(())
    })
}

/// Honest proofs verify once; proofs from the wrong capability secret,
/// the wrong identity key, another audience, or a second submission do not.
pub fn attestation(cases: u32) -> SuiteResult {
    let Pki { ca, .. } = pki();
    let anchors = ca.anchors();
    let caps = ["model-training", "data-validation", "alert-generation", "payment-execution", "x"];
    let strategy = (0usize..caps.len(), any::<[u8; 32]>(), any::<[u8; 32]>(), any::<[u8; 32]>(), 0u8..4);
    run_suite("attestation", cases, strategy, |(c, agent_seed, secret_seed, other_seed, attack)| {
        prop_assume!(secret_seed != other_seed && agent_seed != other_seed);
        let name: AnsName = format!("a2a://prover.{}.lab.v1.0.prod", caps[c]).parse().expect("valid name");
        let keys = KeyPair::from_seed(agent_seed);
        let secret = CapabilitySecret::from_seed(name.capability.clone(), secret_seed);
        let commitment = secret.commitment();
        let chain = ca
            .issue_agent(keys.public_key(), name.clone(), vec![commitment.clone()], T0, fixtures::AGENT_VALIDITY)
            .expect("issuable");
        let store = ChallengeStore::default();

        let ch = store.issue(name.clone(), NOW);
        let honest = prove(&ch, &secret, &keys, &name, NOW).expect("fresh challenge");
        prop_assert!(verify(&honest, &commitment, &chain, &anchors, &store, NOW).is_ok(), "honest proof rejected");
        prop_assert!(verify(&honest, &commitment, &chain, &anchors, &store, NOW).is_err(), "replay accepted");

        let ch = store.issue(name.clone(), NOW);
        let forged = match attack {
            0 => prove(&ch, &CapabilitySecret::from_seed(name.capability.clone(), other_seed), &keys, &name, NOW),
            1 => prove(&ch, &secret, &KeyPair::from_seed(other_seed), &name, NOW),
            2 => {
                let other: AnsName = "a2a://someone-else.data-validation.lab.v1.0.prod".parse().expect("valid name");
                let ch = store.issue(other.clone(), NOW);
                prove(&ch, &secret, &keys, &other, NOW)
            }
            _ => {
                let mut p = prove(&ch, &secret, &keys, &name, NOW).expect("fresh challenge");
                p.nonce.0[0] ^= 1;
                Ok(p)
            }
        };
        if let Ok(proof) = forged {
            prop_assert!(
                verify(&proof, &commitment, &chain, &anchors, &store, NOW).is_err(),
                "attack {attack} produced an accepted proof"
            );
        }
        Ok(())
    })
}

const PROVIDERS: [&str; 3] = ["lab", "corp", "team"];
const ENVS: [&str; 3] = ["prod", "staging", "dev"];
const NAMESPACES: [&str; 2] = ["mlops", "research"];
const CAPS: [&str; 4] = ["shell-exec", "shell-read", "data-read", "model-training"];
const GLOBS: [&str; 5] = ["shell-*", "data-*", "model-training", "*", "nothing-*"];

#[derive(Clone, Debug)]
struct RuleModel {
    effect: Effect,
    protocol: Option<usize>,
    provider: Option<usize>,
    environment: Option<usize>,
    namespace: Option<usize>,
    capability: Option<usize>,
}

fn rule_model() -> impl Strategy<Value = RuleModel> {
    (
        any::<bool>(),
        proptest::option::of(0usize..3),
        proptest::option::of(0usize..PROVIDERS.len()),
        proptest::option::of(0usize..ENVS.len()),
        proptest::option::of(0usize..NAMESPACES.len()),
        proptest::option::of(0usize..GLOBS.len()),
    )
        .prop_map(|(allow, protocol, provider, environment, namespace, capability)| RuleModel {
            effect: if allow { Effect::Allow } else { Effect::Deny },
            protocol,
            provider,
            environment,
            namespace,
            capability,
        })
}

fn glob_model(pattern: &str, text: &str) -> bool {
    match pattern.strip_suffix('*') {
        Some(prefix) => text.starts_with(prefix),
        None => pattern == text,
    }
}

/// Deny overrides any allow; with no applicable allow the answer is deny.
pub fn policy(cases: u32) -> SuiteResult {
    let protocols = [Protocol::A2a, Protocol::Mcp, Protocol::Acp];
    let strategy = (
        proptest::collection::vec(proptest::collection::vec(rule_model(), 0..5), 0..4),
        (0usize..3, 0usize..PROVIDERS.len(), 0usize..ENVS.len(), 0usize..NAMESPACES.len()),
        proptest::collection::btree_set(0usize..CAPS.len(), 0..3),
        any::<bool>(),
    );
    run_suite("policy", cases, strategy, move |(model, (p, prov, env, ns), extra, admission)| {
        let policies: Vec<Policy> = model
            .iter()
            .enumerate()
            .map(|(pi, rules)| Policy {
                id: format!("policy-{pi}"),
                description: String::new(),
                rules: rules
                    .iter()
                    .enumerate()
                    .map(|(ri, r)| PolicyRule {
                        id: format!("rule-{ri}"),
                        effect: r.effect,
                        match_: RuleMatch {
                            protocol: r.protocol.map(|i| protocols[i]),
                            provider: r.provider.map(|i| PROVIDERS[i].to_owned()),
                            environment: r.environment.map(|i| ENVS[i].to_owned()),
                            capability: r.capability.map(|i| GLOBS[i].to_owned()),
                            namespace: r.namespace.map(|i| NAMESPACES[i].to_owned()),
                        },
                        conditions: None,
                    })
                    .collect(),
            })
            .collect();
        let name: AnsName =
            format!("{}://agent.model-training.{}.v1.0.{}", protocols[p], PROVIDERS[prov], ENVS[env]).parse().expect("valid");
        let extra: Vec<Label> = extra.iter().map(|i| label(CAPS[*i])).collect();
        let subject = PolicySubject::new(name, label(NAMESPACES[ns])).with_capabilities(&extra);
        let subject_caps: Vec<String> = subject.capabilities.iter().map(|c| c.to_string()).collect();

        let applies = |r: &RuleModel| {
            r.protocol.is_none_or(|i| i == p)
                && r.provider.is_none_or(|i| i == prov)
                && r.environment.is_none_or(|i| i == env)
                && r.namespace.is_none_or(|i| i == ns)
                && r.capability.is_none_or(|g| subject_caps.iter().any(|c| glob_model(GLOBS[g], c)))
        };
        let rules: Vec<&RuleModel> = model.iter().flatten().filter(|r| applies(r)).collect();
        let any_deny = rules.iter().any(|r| r.effect == Effect::Deny);
        let any_allow = rules.iter().any(|r| r.effect == Effect::Allow);

        let phase = if admission { Phase::Admission } else { Phase::Runtime };
        let decision = evaluate(&EvaluationContext { subject: &subject, phase, now: NOW }, &policies);
        prop_assert_eq!(decision.allowed, any_allow && !any_deny);
        if any_deny {
            prop_assert!(!decision.allowed, "an applicable deny was overridden");
        }
        if !any_allow {
            prop_assert!(!decision.allowed, "allowed without any applicable allow");
        }
        let again = evaluate(&EvaluationContext { subject: &subject, phase, now: NOW }, &policies);
        prop_assert_eq!(decision, again);
        Ok(())
    })
}

#[derive(Clone, Debug)]
struct RecordModel {
    protocol: usize,
    agent: usize,
    capability: usize,
    provider: usize,
    version: (u64, u64, Option<u64>),
    env: usize,
    revoked: bool,
    expired: bool,
}

fn record_model() -> impl Strategy<Value = RecordModel> {
    (
        0usize..3,
        0usize..40,
        0usize..CAPS.len(),
        0usize..PROVIDERS.len(),
        (0u64..3, 0u64..3, proptest::option::of(0u64..2)),
        0usize..ENVS.len(),
        proptest::bool::weighted(0.1),
        proptest::bool::weighted(0.1),
    )
        .prop_map(|(protocol, agent, capability, provider, version, env, revoked, expired)| RecordModel {
            protocol,
            agent,
            capability,
            provider,
            version,
            env,
            revoked,
            expired,
        })
}

#[derive(Clone, Debug)]
struct QueryModel {
    protocol: Option<usize>,
    agent: Option<usize>,
    capability: Option<usize>,
    provider: Option<usize>,
    env: Option<usize>,
    /// 0 exact, 1 at least, 2 latest
    version: Option<(u8, u64, u64, Option<u64>)>,
}

fn query_model() -> impl Strategy<Value = QueryModel> {
    (
        proptest::option::of(0usize..3),
        proptest::option::weighted(0.2, 0usize..40),
        proptest::option::of(0usize..CAPS.len()),
        proptest::option::of(0usize..PROVIDERS.len()),
        proptest::option::of(0usize..ENVS.len()),
        proptest::option::of((0u8..3, 0u64..3, 0u64..3, proptest::option::of(0u64..2))),
    )
        .prop_map(|(protocol, agent, capability, provider, env, version)| QueryModel {
            protocol,
            agent,
            capability,
            provider,
            env,
            version,
        })
}

fn model_name(r: &RecordModel) -> String {
    let (maj, min, patch) = r.version;
    let version = match patch {
        Some(p) => format!("{maj}.{min}.{p}"),
        None => format!("{maj}.{min}"),
    };
    format!(
        "{}://agent-{}.{}.{}.v{version}.{}",
        ["a2a", "mcp", "acp"][r.protocol],
        r.agent,
        CAPS[r.capability],
        PROVIDERS[r.provider],
        ENVS[r.env]
    )
}

fn record(name: &str, chain: &CertificateChain, expires_at: Timestamp) -> AgentRecord {
    let name: AnsName = name.parse().expect("model names are valid");
    AgentRecord {
        did: chain.agent.subject_did.clone(),
        endpoint: fixtures::ENDPOINT.into(),
        chain: chain.clone(),
        commitments: vec![CapabilityCommitment { capability: name.capability.clone(), commitment_key: chain.agent.public_key }],
        namespace: label("mlops"),
        registered_at: T0,
        expires_at,
        status: RecordStatus::Active,
        name,
    }
}

fn event(seq: u64, kind: EventKind) -> RegistryEvent {
    RegistryEvent { seq, at: T0 + seq as i64, kind }
}

/// (protocol, agent, capability, provider, extension) indices.
type GroupKey = (usize, usize, usize, usize, usize);

/// Total order key used by the model: (major, minor, patch-or-zero,
/// patch-present).
fn version_key(v: (u64, u64, Option<u64>)) -> (u64, u64, u64, bool) {
    (v.0, v.1, v.2.unwrap_or(0), v.2.is_some())
}

/// Indexed resolution equals a linear scan with the same filters.
pub fn resolve_oracle(cases: u32) -> SuiteResult {
    let Pki { chain, .. } = pki();
    let allow_all = vec![Policy {
        id: "open".into(),
        description: String::new(),
        rules: vec![PolicyRule { id: "all".into(), effect: Effect::Allow, match_: RuleMatch::default(), conditions: None }],
    }];
    let strategy = (proptest::collection::vec(record_model(), 0..=1_000), proptest::collection::vec(query_model(), 1..8));
    run_suite("resolve vs linear scan", cases, strategy, |(records, queries)| {
        let mut state = RegistryState::default();
        let mut model: BTreeMap<String, (RecordModel, bool)> = BTreeMap::new();
        let mut seq = 0;
        for r in &records {
            let name = model_name(r);
            let expires_at = if r.expired { NOW - 1 } else { NOW + 3_600 };
            seq += 1;
            state.apply(&event(seq, EventKind::Registered(Box::new(record(&name, &chain, expires_at))))).expect("in order");
            model.insert(name, (r.clone(), false));
        }
        for r in records.iter().filter(|r| r.revoked) {
            let name = model_name(r);
            seq += 1;
            let by = chain.agent.subject_did.clone();
            state.apply(&event(seq, EventKind::Revoked { name: name.parse().expect("valid"), by })).expect("known agent");
            model.get_mut(&name).expect("registered").1 = true;
        }
        prop_assert!(state.len() <= 1_000);

        for q in &queries {
            let version_req = q.version.map(|(kind, maj, min, patch)| {
                let v = Version { major: maj, minor: min, patch };
                match kind {
                    0 => VersionReq::Exact(v),
                    1 => VersionReq::AtLeast(v),
                    _ => VersionReq::Latest,
                }
            });
            let query = NameQuery {
                protocol: q.protocol.map(|i| [Protocol::A2a, Protocol::Mcp, Protocol::Acp][i]),
                agent_id: q.agent.map(|i| label(&format!("agent-{i}"))),
                capability: q.capability.map(|i| label(CAPS[i])),
                provider: q.provider.map(|i| label(PROVIDERS[i])),
                extension: q.env.map(|i| label(ENVS[i])),
                version_req,
            };
            let got: Vec<String> = state.resolve(&query, &allow_all, NOW).iter().map(|r| r.name.to_string()).collect();

            let precedence = |v: (u64, u64, Option<u64>)| (v.0, v.1, v.2.unwrap_or(0));
            let mut hits: Vec<(&String, &RecordModel)> = model
                .iter()
                .filter(|(_, (r, revoked))| {
                    !*revoked
                        && !r.expired
                        && q.protocol.is_none_or(|i| i == r.protocol)
                        && q.agent.is_none_or(|i| i == r.agent)
                        && q.capability.is_none_or(|i| i == r.capability)
                        && q.provider.is_none_or(|i| i == r.provider)
                        && q.env.is_none_or(|i| i == r.env)
                        && q.version.is_none_or(|(kind, maj, min, patch)| {
                            let want = (maj, min, patch.unwrap_or(0));
                            match kind {
                                0 => precedence(r.version) == want,
                                1 => precedence(r.version) >= want,
                                _ => true,
                            }
                        })
                })
                .map(|(n, (r, _))| (n, r))
                .collect();
            let order = |a: &(&String, &RecordModel), b: &(&String, &RecordModel)| -> Ordering {
                version_key(b.1.version).cmp(&version_key(a.1.version)).then_with(|| a.0.cmp(b.0))
            };
            if matches!(q.version, Some((2, ..))) {
                let mut best: BTreeMap<GroupKey, (&String, &RecordModel)> = BTreeMap::new();
                for h in hits {
                    let r = h.1;
                    let slot = best.entry((r.protocol, r.agent, r.capability, r.provider, r.env)).or_insert(h);
                    if order(&h, slot) == Ordering::Less {
                        *slot = h;
                    }
                }
                hits = best.into_values().collect();
            }
            hits.sort_by(order);
            let expected: Vec<String> = hits.into_iter().map(|(n, _)| n.clone()).collect();
            prop_assert_eq!(&got, &expected, "query {:?}", q);
        }
        Ok(())
    })
}

#[derive(Clone, Debug)]
enum OpModel {
    Register(usize, u64),
    Renew(usize, i64),
    Revoke(usize),
}

fn op_model() -> impl Strategy<Value = OpModel> {
    prop_oneof![
        3 => (0usize..8, 0u64..3).prop_map(|(i, v)| OpModel::Register(i, v)),
        2 => (0usize..8, 1i64..100_000).prop_map(|(i, d)| OpModel::Renew(i, d)),
        1 => (0usize..8).prop_map(OpModel::Revoke),
    ]
}

/// Replaying the log, alone or on top of a snapshot taken at any point,
/// reproduces the live state and every resolve answer.
pub fn recovery(cases: u32) -> SuiteResult {
    let Pki { chain, .. } = pki();
    let allow_all = vec![Policy {
        id: "open".into(),
        description: String::new(),
        rules: vec![PolicyRule { id: "all".into(), effect: Effect::Allow, match_: RuleMatch::default(), conditions: None }],
    }];
    let strategy = (proptest::collection::vec(op_model(), 0..80), any::<proptest::sample::Index>());
    run_suite("recovery", cases, strategy, |(ops, cut)| {
        let mut live = RegistryState::default();
        let mut lines: Vec<String> = Vec::new();
        let mut snapshots = vec![live.snapshot()];
        for op in &ops {
            let name = |i: usize, v: u64| format!("mcp://agent-{i}.{}.lab.v1.{v}.prod", CAPS[i % CAPS.len()]);
            let seq = live.last_seq() + 1;
            let kind = match *op {
                OpModel::Register(i, v) => EventKind::Registered(Box::new(record(&name(i, v), &chain, NOW + 3_600))),
                OpModel::Renew(i, _) | OpModel::Revoke(i)
                    if live.records().all(|r| r.name.agent_id.as_str() != format!("agent-{i}")) =>
                {
                    continue;
                }
                OpModel::Renew(i, d) => {
                    let r = live.records().find(|r| r.name.agent_id.as_str() == format!("agent-{i}")).expect("checked");
                    EventKind::Renewed { name: r.name.clone(), expires_at: r.expires_at + d }
                }
                OpModel::Revoke(i) => {
                    let r = live.records().find(|r| r.name.agent_id.as_str() == format!("agent-{i}")).expect("checked");
                    EventKind::Revoked { name: r.name.clone(), by: r.did.clone() }
                }
            };
            let ev = event(seq, kind);
            live.apply(&ev).expect("model only emits valid events");
            lines.push(canonical::to_canonical_string(&ev));
            snapshots.push(live.snapshot());
        }
        let log = lines.join("\n");
        let k = cut.index(snapshots.len());
        let snapshot_json = serde_json::to_string(&snapshots[k]).expect("snapshot serializes");
        let snapshot = serde_json::from_str(&snapshot_json).expect("snapshot parses");
        let tail = lines[k..].join("\n");

        let candidates = [
            ("log only", recover(None, log.as_bytes())),
            ("snapshot and full log", recover(Some(snapshots[k].clone()), log.as_bytes())),
            ("reloaded snapshot and tail", recover(Some(snapshot), tail.as_bytes())),
        ];
        for (how, recovered) in candidates {
            let recovered = recovered.map_err(|e| TestCaseError::fail(format!("{how}: {e:?}")))?;
            prop_assert_eq!(&recovered, &live, "{} diverged", how);
            prop_assert!(recovered.audit_index());
            for cap in CAPS {
                for latest in [false, true] {
                    let mut q = NameQuery::capability(label(cap));
                    if latest {
                        q.version_req = Some(VersionReq::Latest);
                    }
                    prop_assert_eq!(recovered.resolve(&q, &allow_all, NOW), live.resolve(&q, &allow_all, NOW));
                }
            }
        }
        Ok(())
    })
}

fn arb_label() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z0-9]",
        "[a-z0-9][a-z0-9-]{0,20}[a-z0-9]",
        "[a-z0-9][a-z0-9-]{61}[a-z0-9]",
    ]
}

/// Names assembled from random components parse back to those components
/// and format to the text they were built from.
pub fn name_round_trip(cases: u32) -> SuiteResult {
    let strategy = (
        proptest::sample::select(vec!["a2a", "mcp", "acp"]),
        (arb_label(), arb_label(), arb_label(), arb_label()),
        (0u64..10_000, 0u64..10_000, proptest::option::of(0u64..10_000)),
    );
    run_suite("name round trip", cases, strategy, |(scheme, (agent, cap, provider, ext), (major, minor, patch))| {
        let version = match patch {
            Some(p) => format!("{major}.{minor}.{p}"),
            None => format!("{major}.{minor}"),
        };
        let text = format!("{scheme}://{agent}.{cap}.{provider}.v{version}.{ext}");
        let name: AnsName = text.parse().map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
        prop_assert_eq!(name.protocol.to_string(), scheme);
        prop_assert_eq!(name.agent_id.as_str(), agent.as_str());
        prop_assert_eq!(name.capability.as_str(), cap.as_str());
        prop_assert_eq!(name.provider.as_str(), provider.as_str());
        prop_assert_eq!(name.extension.as_str(), ext.as_str());
        prop_assert_eq!(name.version, Version { major, minor, patch });
        prop_assert_eq!(name.to_string(), text);
        Ok(())
    })
}
