mod common;

use std::cmp::Ordering;
use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::sync::Arc;

use proptest::prelude::*;
use proptest::sample::select;

use ans_core::attestation::{create_capability, prove, verify, CapabilitySecret, ChallengeStore};
use ans_core::identity::{derive_did, KeyPair};
use ans_core::name::compare_versions;
use ans_core::policy::{
    evaluate, Conditions, Effect, EvaluationContext, Phase, Policy, PolicyRule, PolicySubject, Resources, RuleMatch,
};
use ans_core::{AnsName, CertificateAuthority, ErrorCode, Label, NameQuery, Protocol, Version};

use common::*;

fn label_strategy() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z0-9]",
        "[a-z0-9][a-z0-9-]{0,20}[a-z0-9]",
        "[a-z0-9][a-z0-9-]{59,61}[a-z0-9]",
    ]
}

fn version_strategy() -> impl Strategy<Value = Version> {
    (0u64..1000, 0u64..1000, proptest::option::of(0u64..1000))
        .prop_map(|(major, minor, patch)| Version { major, minor, patch })
}

fn name_strategy() -> impl Strategy<Value = AnsName> {
    (
        select(Protocol::ALL.to_vec()),
        label_strategy(),
        label_strategy(),
        label_strategy(),
        version_strategy(),
        label_strategy(),
    )
        .prop_map(|(protocol, a, c, p, version, e)| AnsName {
            protocol,
            agent_id: Label::new(a).unwrap(),
            capability: Label::new(c).unwrap(),
            provider: Label::new(p).unwrap(),
            version,
            extension: Label::new(e).unwrap(),
        })
}

/// Text-level rendering used as an oracle, independent of `Display`.
fn render(n: &AnsName) -> String {
    let mut version = format!("{}.{}", n.version.major, n.version.minor);
    if let Some(p) = n.version.patch {
        version.push_str(&format!(".{p}"));
    }
    let scheme = match n.protocol {
        Protocol::A2a => "a2a",
        Protocol::Mcp => "mcp",
        Protocol::Acp => "acp",
        Protocol::Custom => "custom",
    };
    format!("{scheme}://{}.{}.{}.v{version}.{}", n.agent_id.as_str(), n.capability.as_str(), n.provider.as_str(), n.extension.as_str())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn name_round_trip(name in name_strategy()) {
        let text = name.format();
        prop_assert_eq!(&text, &render(&name));
        prop_assert_eq!(AnsName::parse(&text).unwrap(), name);
    }
}

#[derive(Debug, Clone, Copy)]
enum Corruption {
    Uppercase,
    LeadingHyphen,
    TrailingHyphen,
    Dot,
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn corrupted_labels_are_rejected(
        name in name_strategy(),
        field in 0usize..4,
        how in select(vec![Corruption::Uppercase, Corruption::LeadingHyphen, Corruption::TrailingHyphen, Corruption::Dot]),
        pos in any::<prop::sample::Index>(),
    ) {
        let labels = [name.agent_id.as_str(), name.capability.as_str(), name.provider.as_str(), name.extension.as_str()];
        let mut target = labels[field].to_owned();
        match how {
            Corruption::Uppercase => {
                let i = pos.index(target.len());
                target.replace_range(i..=i, "Q");
            }
            Corruption::LeadingHyphen => target.insert(0, '-'),
            Corruption::TrailingHyphen => target.push('-'),
            Corruption::Dot => {
                let i = pos.index(target.len() + 1);
                target.insert(i, '.');
            }
        }
        let dot = target.find('.');
        let mut parts: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        parts[field] = target.clone();
        let text = format!(
            "{}://{}.{}.{}.v{}.{}",
            name.protocol, parts[0], parts[1], parts[2], name.version, parts[3]
        );
        match AnsName::parse(&text) {
            Err(_) => {}
            // With no patch, a numeric run before a dot in the extension
            // reads as the patch; that is a different, well-formed name.
            Ok(parsed) => {
                let (head, tail) = target.split_at(dot.unwrap_or(0));
                let reread = field == 3
                    && name.version.patch.is_none()
                    && !head.is_empty()
                    && head.bytes().all(|b| b.is_ascii_digit());
                prop_assert!(reread, "accepted {}", text);
                prop_assert_eq!(parsed.version.patch, head.parse::<u64>().ok());
                prop_assert_eq!(parsed.extension.as_str(), &tail[1..]);
            }
        }
    }

    #[test]
    fn version_order_is_total(a in version_strategy(), b in version_strategy(), c in version_strategy()) {
        prop_assert_eq!(compare_versions(&a, &a), Ordering::Equal);
        prop_assert_eq!(compare_versions(&a, &b), compare_versions(&b, &a).reverse());
        if compare_versions(&a, &b) == Ordering::Equal {
            prop_assert_eq!(a, b);
        }
        if compare_versions(&a, &b) != Ordering::Greater && compare_versions(&b, &c) != Ordering::Greater {
            prop_assert_ne!(compare_versions(&a, &c), Ordering::Greater);
        }
        // agrees with numeric order whenever the triples differ
        let key = |v: &Version| (v.major, v.minor, v.patch.unwrap_or(0));
        if key(&a) != key(&b) {
            prop_assert_eq!(compare_versions(&a, &b), key(&a).cmp(&key(&b)));
        }
    }

    #[test]
    fn single_field_query_is_field_equality(a in name_strategy(), b in name_strategy(), field in 0usize..5) {
        let q = match field {
            0 => NameQuery { protocol: Some(b.protocol), ..Default::default() },
            1 => NameQuery { agent_id: Some(b.agent_id.clone()), ..Default::default() },
            2 => NameQuery { capability: Some(b.capability.clone()), ..Default::default() },
            3 => NameQuery { provider: Some(b.provider.clone()), ..Default::default() },
            _ => NameQuery { extension: Some(b.extension.clone()), ..Default::default() },
        };
        let equal = match field {
            0 => a.protocol == b.protocol,
            1 => a.agent_id == b.agent_id,
            2 => a.capability == b.capability,
            3 => a.provider == b.provider,
            _ => a.extension == b.extension,
        };
        prop_assert_eq!(a.matches(&q), equal);
        prop_assert!(b.matches(&q));
    }
}

#[test]
fn did_injective_over_random_keys() {
    let mut seen = HashSet::new();
    for _ in 0..10_000 {
        let key = KeyPair::generate().public_key();
        let did = derive_did(&key);
        assert_eq!(did, derive_did(&key));
        assert!(seen.insert(did), "DID collision");
    }
}

// --- policy ---------------------------------------------------------------

fn subject_strategy() -> impl Strategy<Value = PolicySubject> {
    (
        select(Protocol::ALL.to_vec()),
        select(vec!["research-lab", "mlops-team", "devsecops-team"]),
        select(vec!["prod", "staging", "hipaa", "dev"]),
        select(vec!["concept-drift-detection", "model-training", "security-scanning", "shell-exec"]),
        select(vec!["ns-a", "ns-b"]),
        proptest::option::of(0i64..400 * 86_400),
        proptest::option::of((proptest::option::of(0u64..4000), proptest::option::of(0u64..8192))),
    )
        .prop_map(|(protocol, provider, env, cap, ns, validity, res)| {
            let name = AnsName::parse(&format!("{protocol}://agent.{cap}.{provider}.v1.0.{env}")).unwrap();
            let mut s = PolicySubject::new(name, Label::new(ns).unwrap());
            s.cert_validity_seconds = validity;
            s.resources = res.map(|(cpu_millicores, memory_mebibytes)| Resources { cpu_millicores, memory_mebibytes });
            s
        })
}

fn rule_match_strategy() -> impl Strategy<Value = RuleMatch> {
    (
        proptest::option::of(select(Protocol::ALL.to_vec())),
        proptest::option::of(select(vec!["research-lab", "mlops-team"])),
        proptest::option::of(select(vec!["prod", "hipaa"])),
        proptest::option::of(select(vec!["*", "model-*", "*-detection", "shell-exec"])),
        proptest::option::of(select(vec!["ns-a"])),
    )
        .prop_map(|(protocol, provider, environment, capability, namespace)| RuleMatch {
            protocol,
            provider: provider.map(str::to_owned),
            environment: environment.map(str::to_owned),
            capability: capability.map(str::to_owned),
            namespace: namespace.map(str::to_owned),
        })
}

fn conditions_strategy() -> impl Strategy<Value = Option<Conditions>> {
    proptest::option::of(
        (
            proptest::option::of(Just(vec!["prod".to_owned(), "staging".to_owned()])),
            proptest::option::of(Just(vec!["research-lab".to_owned()])),
            proptest::option::of(Just(vec!["shell-*".to_owned()])),
            proptest::option::of(0i64..400 * 86_400),
            proptest::option::of(0u64..4000),
            proptest::option::of(0u64..8192),
        )
            .prop_map(|(envs, providers, deny, validity, cpu, mem)| Conditions {
                allowed_environments: envs,
                provider_allowlist: providers,
                capability_denylist: deny,
                max_cert_validity_seconds: validity,
                max_cpu_millicores: cpu,
                max_memory_mebibytes: mem,
            }),
    )
}

fn rule_strategy(effect: Option<Effect>) -> impl Strategy<Value = PolicyRule> {
    let effect = match effect {
        Some(e) => Just(e).boxed(),
        None => select(vec![Effect::Allow, Effect::Deny]).boxed(),
    };
    (effect, rule_match_strategy(), conditions_strategy()).prop_map(|(effect, m, conditions)| PolicyRule {
        id: String::new(),
        effect,
        match_: m,
        conditions,
    })
}

fn policies_strategy() -> impl Strategy<Value = Vec<Policy>> {
    prop::collection::vec(prop::collection::vec(rule_strategy(None), 0..6), 0..4).prop_map(|ps| {
        ps.into_iter()
            .enumerate()
            .map(|(i, rules)| Policy {
                id: format!("p{i}"),
                description: String::new(),
                rules: rules
                    .into_iter()
                    .enumerate()
                    .map(|(j, mut r)| {
                        r.id = format!("r{j}");
                        r
                    })
                    .collect(),
            })
            .collect()
    })
}

fn phase_strategy() -> impl Strategy<Value = Phase> {
    select(vec![Phase::Admission, Phase::Runtime])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn adding_a_matching_deny_never_allows(
        subject in subject_strategy(),
        policies in policies_strategy(),
        phase in phase_strategy(),
        slot in any::<prop::sample::Index>(),
    ) {
        let ctx = EvaluationContext { subject: &subject, phase, now: T0 };
        let mut more = policies.clone();
        let deny = PolicyRule { id: "injected".into(), effect: Effect::Deny, match_: RuleMatch::default(), conditions: None };
        if more.is_empty() {
            more.push(Policy { id: "extra".into(), description: String::new(), rules: vec![deny] });
        } else {
            let i = slot.index(more.len());
            more[i].rules.push(deny);
        }
        prop_assert!(!evaluate(&ctx, &more).allowed);
        // adding an arbitrary rule of either kind never turns a deny into an allow
        // unless it is an allow rule
        let before = evaluate(&ctx, &policies);
        if !before.allowed {
            let mut with_deny = policies.clone();
            with_deny.push(Policy {
                id: "extra".into(),
                description: String::new(),
                rules: vec![PolicyRule { id: "d".into(), effect: Effect::Deny, match_: RuleMatch::default(), conditions: Some(Conditions::default()) }],
            });
            prop_assert!(!evaluate(&ctx, &with_deny).allowed);
        }
    }

    #[test]
    fn no_allow_rules_means_denied(subject in subject_strategy(), policies in policies_strategy(), phase in phase_strategy()) {
        let stripped: Vec<Policy> = policies
            .into_iter()
            .map(|mut p| {
                p.rules.retain(|r| r.effect == Effect::Deny);
                p
            })
            .collect();
        let decision = evaluate(&EvaluationContext { subject: &subject, phase, now: T0 }, &stripped);
        prop_assert!(!decision.allowed);
        prop_assert!(decision.matched_rules.iter().all(|m| m.effect == Effect::Deny));
    }

    #[test]
    fn evaluation_is_pure(subject in subject_strategy(), policies in policies_strategy(), phase in phase_strategy()) {
        let ctx = EvaluationContext { subject: &subject, phase, now: T0 };
        let first = evaluate(&ctx, &policies);
        for _ in 0..3 {
            prop_assert_eq!(&evaluate(&ctx, &policies), &first);
        }
        // allowed implies a granting allow and no fired deny
        if first.allowed {
            prop_assert!(first.matched_rules.iter().any(|m| m.effect == Effect::Allow));
            prop_assert!(first.denying_rules().next().is_none());
        }
    }

    #[test]
    fn resource_limits_ignored_at_runtime(subject in subject_strategy(), cpu in 0u64..10, mem in 0u64..10) {
        let policy = Policy {
            id: "limits".into(),
            description: String::new(),
            rules: vec![PolicyRule {
                id: "small".into(),
                effect: Effect::Allow,
                match_: RuleMatch::default(),
                conditions: Some(Conditions { max_cpu_millicores: Some(cpu), max_memory_mebibytes: Some(mem), ..Default::default() }),
            }],
        };
        let runtime = evaluate(&EvaluationContext { subject: &subject, phase: Phase::Runtime, now: T0 }, &[policy]);
        prop_assert!(runtime.allowed);
    }
}

// --- attestation ----------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn proofs_verify_only_under_the_committed_key(
        cap_seed in any::<[u8; 32]>(),
        wrong_seed in any::<[u8; 32]>(),
        wrong_identity_seed in any::<[u8; 32]>(),
    ) {
        prop_assume!(cap_seed != wrong_seed);
        let ca = CertificateAuthority::init(T0);
        let name: AnsName = DRIFT.parse().unwrap();
        let keys = KeyPair::generate();
        prop_assume!(keys.seed() != wrong_identity_seed);
        let secret = CapabilitySecret::from_seed(name.capability.clone(), cap_seed);
        let commitment = secret.commitment();
        let chain = ca
            .issue_agent(keys.public_key(), name.clone(), vec![commitment.clone()], T0, 86_400)
            .unwrap();
        let anchors = ca.anchors();
        let store = ChallengeStore::default();

        let ch = store.issue(name.clone(), T0 + 1);
        let good = prove(&ch, &secret, &keys, &name, T0 + 2).unwrap();
        prop_assert!(verify(&good, &commitment, &chain, &anchors, &store, T0 + 2).is_ok());
        let again = verify(&good, &commitment, &chain, &anchors, &store, T0 + 3).unwrap_err();
        prop_assert_eq!(again.code(), ErrorCode::NonceReplay);

        let ch = store.issue(name.clone(), T0 + 4);
        let forged = CapabilitySecret::from_seed(name.capability.clone(), wrong_seed);
        let bad = prove(&ch, &forged, &keys, &name, T0 + 5).unwrap();
        prop_assert_eq!(verify(&bad, &commitment, &chain, &anchors, &store, T0 + 5).unwrap_err().code(), ErrorCode::BadSignature);
        let impostor = KeyPair::from_seed(wrong_identity_seed);
        let bad = prove(&ch, &secret, &impostor, &name, T0 + 5).unwrap();
        prop_assert_eq!(verify(&bad, &commitment, &chain, &anchors, &store, T0 + 5).unwrap_err().code(), ErrorCode::BadSignature);
        // the failed attempts did not burn the challenge
        prop_assert!(store.is_outstanding(&ch.nonce));

        // the secret never shows up in anything the registry side stores
        let hex_secret = hex::encode(cap_seed);
        for artifact in [
            serde_json::to_string(&commitment).unwrap(),
            serde_json::to_string(&good).unwrap(),
            chain.to_canonical_string(),
        ] {
            prop_assert!(!artifact.contains(&hex_secret));
        }
    }
}

#[test]
fn concurrent_submissions_accept_once() {
    let ca = CertificateAuthority::init(T0);
    let name: AnsName = DRIFT.parse().unwrap();
    let keys = KeyPair::generate();
    let (secret, commitment) = create_capability(name.capability.clone());
    let chain = Arc::new(ca.issue_agent(keys.public_key(), name.clone(), vec![commitment.clone()], T0, 86_400).unwrap());
    let anchors = Arc::new(ca.anchors());
    let store = Arc::new(ChallengeStore::default());
    let commitment = Arc::new(commitment);

    for _ in 0..50 {
        let ch = store.issue(name.clone(), T0 + 1);
        let proof = Arc::new(prove(&ch, &secret, &keys, &name, T0 + 1).unwrap());
        let accepted = Arc::new(AtomicUsize::new(0));
        let threads: Vec<_> = (0..6)
            .map(|_| {
                let (proof, commitment, chain, anchors, store, accepted) =
                    (proof.clone(), commitment.clone(), chain.clone(), anchors.clone(), store.clone(), accepted.clone());
                std::thread::spawn(move || {
                    if verify(&proof, &commitment, &chain, &anchors, &store, T0 + 2).is_ok() {
                        accepted.fetch_add(1, AtomicOrdering::SeqCst);
                    }
                })
            })
            .collect();
        for t in threads {
            t.join().unwrap();
        }
        assert_eq!(accepted.load(AtomicOrdering::SeqCst), 1);
    }
}
