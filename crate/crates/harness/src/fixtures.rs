//! Deterministic agents, manifests and policies shared by every run.

use rand::Rng;

use ans_client::AgentIdentity;
use ans_core::attestation::CapabilitySecret;
use ans_core::identity::{KeyPair, Timestamp, DAY_SECONDS};
use ans_core::manifest::{ManifestCertificate, ManifestMetadata, ManifestSpec, API_VERSION, KIND};
use ans_core::policy::{load_policies, Policy};
use ans_core::{AgentManifest, AnsName, CertificateAuthority, Label};

const NAMESPACES: [&str; 5] = ["mlops-system", "research", "data-platform", "security-ops", "analytics"];
const CAPABILITIES: [&str; 5] =
    ["model-training", "concept-drift-detection", "data-validation", "security-scanning", "report-generation"];
const PROVIDERS: [&str; 5] = ["mlops-team", "research-lab", "data-eng", "devsecops-team", "bi-team"];
const PROTOCOLS: [&str; 3] = ["a2a", "mcp", "acp"];

/// Held by every harness agent, so one query touches the whole population.
pub const SHARED_CAPABILITY: &str = "health-reporting";
pub const AGENT_VALIDITY: i64 = 30 * DAY_SECONDS;
pub const ENDPOINT: &str = "http://127.0.0.1:9000/agent";

/// Policies the harness registry runs with. Development environments and
/// shell capabilities are forbidden.
pub const POLICY_DOCUMENT: &str = r#"{"policies":[
  {"id":"agent-security-policy","description":"baseline admission rules","rules":[
    {"id":"baseline","effect":"allow","conditions":{"allowed_environments":["prod","staging"],"max_cert_validity_seconds":7776000}},
    {"id":"no-shell","effect":"deny","match":{"capability":"shell-*"}},
    {"id":"no-dev-environment","effect":"deny","match":{"environment":"dev"}}]},
  {"id":"data-access-policy","description":"registered agents may read shared data","rules":[
    {"id":"allow-registered","effect":"allow"}]}
]}"#;

pub const FORBIDDEN_ENVIRONMENT_RULE: &str = "no-dev-environment";

pub fn policies() -> Vec<Policy> {
    load_policies(POLICY_DOCUMENT).expect("built-in policy document parses")
}

/// Ten rules spread over two policies, for the evaluation micro-benchmark.
pub fn ten_rule_policies() -> Vec<Policy> {
    load_policies(
        r#"{"policies":[
  {"id":"platform","rules":[
    {"id":"allow-prod","effect":"allow","match":{"environment":"prod"}},
    {"id":"allow-staging","effect":"allow","match":{"environment":"staging"},"conditions":{"max_cert_validity_seconds":2592000}},
    {"id":"no-dev","effect":"deny","match":{"environment":"dev"}},
    {"id":"no-shell","effect":"deny","match":{"capability":"shell-*"}},
    {"id":"providers","effect":"deny","conditions":{"provider_allowlist":["mlops-team","research-lab","data-eng","devsecops-team","bi-team"]}}]},
  {"id":"workloads","rules":[
    {"id":"mcp-tools","effect":"allow","match":{"protocol":"mcp"},"conditions":{"capability_denylist":["exec-*","root-*"]}},
    {"id":"a2a-peers","effect":"allow","match":{"protocol":"a2a"}},
    {"id":"acp-limits","effect":"allow","match":{"protocol":"acp"},"conditions":{"max_cpu_millicores":4000,"max_memory_mebibytes":8192}},
    {"id":"security-ns","effect":"allow","match":{"namespace":"security-ops","capability":"security-*"}},
    {"id":"no-hipaa-outside-security","effect":"deny","match":{"environment":"hipaa","namespace":"research"}}]}
]}"#,
    )
    .expect("built-in policy document parses")
}

/// Where and under which name agent `index` lives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgentSpec {
    pub index: usize,
    pub name: AnsName,
    pub namespace: Label,
    pub extra_capabilities: Vec<Label>,
}

fn pick(list: &[&str], i: usize, fallback: &str) -> String {
    list.get(i).map(|s| s.to_string()).unwrap_or_else(|| format!("{fallback}-{i}"))
}

pub fn namespace(i: usize) -> Label {
    Label::new(pick(&NAMESPACES, i, "namespace")).expect("valid label")
}

pub fn capability(namespace_index: usize) -> Label {
    Label::new(pick(&CAPABILITIES, namespace_index, "capability")).expect("valid label")
}

pub fn provider(namespace_index: usize) -> Label {
    Label::new(pick(&PROVIDERS, namespace_index, "provider")).expect("valid label")
}

/// Agents are dealt round-robin over the namespaces.
pub fn agent_specs(n_agents: usize, n_namespaces: usize) -> Vec<AgentSpec> {
    (0..n_agents)
        .map(|i| {
            let ns = i % n_namespaces;
            let text = format!(
                "{}://agent-{i:03}.{}.{}.v1.{}.prod",
                PROTOCOLS[i % PROTOCOLS.len()],
                capability(ns),
                provider(ns),
                i % 4
            );
            AgentSpec {
                index: i,
                name: text.parse().expect("generated names are valid"),
                namespace: namespace(ns),
                extra_capabilities: vec![Label::new(SHARED_CAPABILITY).expect("valid label")],
            }
        })
        .collect()
}

pub fn seeded_ca<R: Rng>(rng: &mut R, now: Timestamp) -> CertificateAuthority {
    CertificateAuthority::from_keys(KeyPair::from_seed(rng.gen()), KeyPair::from_seed(rng.gen()), now)
}

pub fn seeded_identity<R: Rng>(
    ca: &CertificateAuthority,
    spec: &AgentSpec,
    rng: &mut R,
    not_before: Timestamp,
    validity_seconds: i64,
) -> AgentIdentity {
    identity_with(ca, spec.name.clone(), &spec.extra_capabilities, rng, not_before, validity_seconds)
}

pub fn identity_with<R: Rng>(
    ca: &CertificateAuthority,
    name: AnsName,
    extra: &[Label],
    rng: &mut R,
    not_before: Timestamp,
    validity_seconds: i64,
) -> AgentIdentity {
    let keys = KeyPair::from_seed(rng.gen());
    let mut caps = vec![name.capability.clone()];
    caps.extend(extra.iter().filter(|c| **c != name.capability).cloned());
    let secrets: Vec<CapabilitySecret> = caps.into_iter().map(|c| CapabilitySecret::from_seed(c, rng.gen())).collect();
    let chain = ca
        .issue_agent(keys.public_key(), name.clone(), secrets.iter().map(|s| s.commitment()).collect(), not_before, validity_seconds)
        .expect("harness certificates fit the intermediate window");
    AgentIdentity::new(name, keys, chain, secrets, ENDPOINT).expect("identity is self-consistent")
}

/// Manifest describing `identity`, with its chain attached.
pub fn manifest_for(identity: &AgentIdentity, namespace: &Label) -> AgentManifest {
    let name = identity.name();
    AgentManifest {
        api_version: API_VERSION.into(),
        kind: KIND.into(),
        metadata: ManifestMetadata { name: name.agent_id.to_string(), namespace: namespace.to_string() },
        spec: ManifestSpec {
            ans_name: name.to_string(),
            capabilities: identity.capabilities().map(|c| c.to_string()).collect(),
            provider: name.provider.to_string(),
            version: name.version.to_string(),
            environment: name.extension.to_string(),
            certificate: ManifestCertificate {
                issuer: "ans-ca".into(),
                validity: format!("{}d", identity.chain().agent.validity_seconds() / DAY_SECONDS),
                chain: Some(identity.chain().clone()),
            },
            policies: vec!["agent-security-policy".into(), "data-access-policy".into()],
            resources: None,
        },
    }
}
