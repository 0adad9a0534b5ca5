//! Deny-by-default policy evaluation.
//!
//! Policies are ordered lists of rules. A rule *applies* when its `match`
//! predicate holds for the subject. Combining is deny-overrides:
//!
//! * an applicable `deny` rule fires if it has no conditions, or if any of its
//!   conditions is violated; one fired deny rejects the subject;
//! * otherwise an applicable `allow` rule grants when all of its conditions
//!   hold;
//! * with no granting rule the answer is the default deny.
//!
//! Subjects may also name policy sets that must each grant on their own
//! (the `policies` list of an agent manifest).

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::ErrorCode;
use crate::identity::Timestamp;
use crate::name::{AnsName, Label, Protocol};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Effect {
    Allow,
    Deny,
}

impl Effect {
    pub fn as_str(self) -> &'static str {
        match self {
            Effect::Allow => "allow",
            Effect::Deny => "deny",
        }
    }
}

/// Partial predicate over the subject. Absent fields match anything.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleMatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<Protocol>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment: Option<String>,
    /// `*`-glob matched against every capability of the subject.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capability: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub namespace: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Conditions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed_environments: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider_allowlist: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capability_denylist: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_cert_validity_seconds: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_cpu_millicores: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_memory_mebibytes: Option<u64>,
}

impl Conditions {
    pub fn is_empty(&self) -> bool {
        self == &Conditions::default()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyRule {
    pub id: String,
    pub effect: Effect,
    #[serde(default, rename = "match")]
    pub match_: RuleMatch,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditions: Option<Conditions>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Policy {
    pub id: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub rules: Vec<PolicyRule>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDocument {
    pub policies: Vec<Policy>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Admission,
    Runtime,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resources {
    pub cpu_millicores: Option<u64>,
    pub memory_mebibytes: Option<u64>,
}

/// What the policy engine sees of an agent, whether it comes from a
/// manifest, a registration request or a stored record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicySubject {
    pub name: AnsName,
    pub namespace: Label,
    /// Includes the name's own capability.
    pub capabilities: Vec<Label>,
    pub cert_validity_seconds: Option<i64>,
    pub resources: Option<Resources>,
    pub required_policies: Vec<String>,
}

impl PolicySubject {
    pub fn new(name: AnsName, namespace: Label) -> Self {
        let capabilities = vec![name.capability.clone()];
        PolicySubject {
            name,
            namespace,
            capabilities,
            cert_validity_seconds: None,
            resources: None,
            required_policies: Vec::new(),
        }
    }

    pub fn with_capabilities<'a>(mut self, caps: impl IntoIterator<Item = &'a Label>) -> Self {
        for cap in caps {
            if !self.capabilities.contains(cap) {
                self.capabilities.push(cap.clone());
            }
        }
        self
    }

    pub fn environment(&self) -> &str {
        self.name.extension.as_str()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvaluationContext<'a> {
    pub subject: &'a PolicySubject,
    pub phase: Phase,
    pub now: Timestamp,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatchedRule {
    pub policy_id: String,
    pub rule_id: String,
    pub effect: Effect,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub allowed: bool,
    /// Rules that took effect: fired denies and granting allows.
    pub matched_rules: Vec<MatchedRule>,
    pub reasons: Vec<String>,
}

impl PolicyDecision {
    pub fn denying_rules(&self) -> impl Iterator<Item = &MatchedRule> {
        self.matched_rules.iter().filter(|m| m.effect == Effect::Deny)
    }
}

pub const DEFAULT_DENY_REASON: &str = "default deny: no allow rule granted access";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("policy parse error at {location}: {message}")]
pub struct PolicyParseError {
    /// `line L column C` for syntax errors, a field path for semantic ones.
    pub location: String,
    pub message: String,
}

impl PolicyParseError {
    pub fn code(&self) -> ErrorCode {
        ErrorCode::PolicyParse
    }
}

/// Parses and validates a policy file.
pub fn load_policies(document: &str) -> Result<Vec<Policy>, PolicyParseError> {
    let doc: PolicyDocument = serde_json::from_str(document).map_err(|e| PolicyParseError {
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    validate_policies(&doc.policies)?;
    Ok(doc.policies)
}

pub fn validate_policies(policies: &[Policy]) -> Result<(), PolicyParseError> {
    let mut policy_ids = HashSet::new();
    for (pi, policy) in policies.iter().enumerate() {
        let err = |location: String, message: String| Err(PolicyParseError { location, message });
        if policy.id.is_empty() {
            return err(format!("policies[{pi}].id"), "policy id must not be empty".into());
        }
        if !policy_ids.insert(policy.id.as_str()) {
            return err(format!("policies[{pi}].id"), format!("duplicate policy id `{}`", policy.id));
        }
        let mut rule_ids = HashSet::new();
        for (ri, rule) in policy.rules.iter().enumerate() {
            if rule.id.is_empty() {
                return err(format!("policies[{pi}].rules[{ri}].id"), "rule id must not be empty".into());
            }
            if !rule_ids.insert(rule.id.as_str()) {
                return err(
                    format!("policies[{pi}].rules[{ri}].id"),
                    format!("duplicate rule id `{}` in policy `{}`", rule.id, policy.id),
                );
            }
            if let Some(c) = &rule.conditions {
                if c.max_cert_validity_seconds.is_some_and(|v| v <= 0) {
                    return err(
                        format!("policies[{pi}].rules[{ri}].conditions.max_cert_validity_seconds"),
                        "must be positive".into(),
                    );
                }
            }
        }
    }
    Ok(())
}

/// `*` matches any (possibly empty) run of characters; everything else is
/// literal.
pub fn glob_match(pattern: &str, text: &str) -> bool {
    let (p, t) = (pattern.as_bytes(), text.as_bytes());
    let (mut pi, mut ti) = (0, 0);
    let mut backtrack: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && p[pi] == b'*' {
            backtrack = Some((pi, ti));
            pi += 1;
        } else if pi < p.len() && p[pi] == t[ti] {
            pi += 1;
            ti += 1;
        } else if let Some((star, matched)) = backtrack {
            pi = star + 1;
            ti = matched + 1;
            backtrack = Some((star, matched + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&b| b == b'*')
}

impl RuleMatch {
    pub fn applies_to(&self, subject: &PolicySubject) -> bool {
        let eq = |want: &Option<String>, have: &str| want.as_deref().is_none_or(|w| w == have);
        self.protocol.is_none_or(|p| p == subject.name.protocol)
            && eq(&self.provider, subject.name.provider.as_str())
            && eq(&self.environment, subject.environment())
            && eq(&self.namespace, subject.namespace.as_str())
            && self
                .capability
                .as_deref()
                .is_none_or(|glob| subject.capabilities.iter().any(|c| glob_match(glob, c.as_str())))
    }
}

impl Conditions {
    /// Human-readable descriptions of every violated condition.
    pub fn violations(&self, subject: &PolicySubject, phase: Phase) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(envs) = &self.allowed_environments {
            if !envs.iter().any(|e| e == subject.environment()) {
                out.push(format!("environment `{}` is not in {:?}", subject.environment(), envs));
            }
        }
        if let Some(providers) = &self.provider_allowlist {
            if !providers.iter().any(|p| p == subject.name.provider.as_str()) {
                out.push(format!("provider `{}` is not allow-listed", subject.name.provider));
            }
        }
        if let Some(globs) = &self.capability_denylist {
            for cap in &subject.capabilities {
                if let Some(glob) = globs.iter().find(|g| glob_match(g, cap.as_str())) {
                    out.push(format!("capability `{cap}` is deny-listed by `{glob}`"));
                }
            }
        }
        if let Some(max) = self.max_cert_validity_seconds {
            match subject.cert_validity_seconds {
                Some(v) if v <= max => {}
                Some(v) => out.push(format!("certificate validity {v}s exceeds maximum {max}s")),
                None => out.push("certificate validity is unknown".to_owned()),
            }
        }
        // resource limits are checked before deployment only
        if phase == Phase::Admission {
            let resources = subject.resources.unwrap_or_default();
            if let Some(max) = self.max_cpu_millicores {
                match resources.cpu_millicores {
                    Some(v) if v <= max => {}
                    Some(v) => out.push(format!("cpu {v}m exceeds maximum {max}m")),
                    None => out.push("cpu limit is unspecified".to_owned()),
                }
            }
            if let Some(max) = self.max_memory_mebibytes {
                match resources.memory_mebibytes {
                    Some(v) if v <= max => {}
                    Some(v) => out.push(format!("memory {v}Mi exceeds maximum {max}Mi")),
                    None => out.push("memory limit is unspecified".to_owned()),
                }
            }
        }
        out
    }
}

enum RuleOutcome {
    NotApplicable,
    /// Applicable allow whose conditions failed, or deny whose conditions held.
    Inert(Vec<String>),
    Fired,
}

fn rule_outcome(rule: &PolicyRule, subject: &PolicySubject, phase: Phase) -> RuleOutcome {
    if !rule.match_.applies_to(subject) {
        return RuleOutcome::NotApplicable;
    }
    let violations = rule.conditions.as_ref().map(|c| c.violations(subject, phase)).unwrap_or_default();
    let has_conditions = rule.conditions.as_ref().is_some_and(|c| !c.is_empty());
    match rule.effect {
        Effect::Allow if violations.is_empty() => RuleOutcome::Fired,
        Effect::Allow => RuleOutcome::Inert(violations),
        Effect::Deny if !has_conditions || !violations.is_empty() => RuleOutcome::Fired,
        Effect::Deny => RuleOutcome::Inert(Vec::new()),
    }
}

/// Deterministic deny-overrides evaluation with a default deny.
pub fn evaluate(ctx: &EvaluationContext<'_>, policies: &[Policy]) -> PolicyDecision {
    let subject = ctx.subject;
    let mut matched = Vec::new();
    let mut reasons = Vec::new();
    let mut denied = false;
    let mut granted = false;
    let mut granting_policies: HashSet<&str> = HashSet::new();

    for policy in policies {
        for rule in &policy.rules {
            match rule_outcome(rule, subject, ctx.phase) {
                RuleOutcome::NotApplicable => {}
                RuleOutcome::Inert(violations) => {
                    for v in violations {
                        reasons.push(format!("{}/{}: {v}", policy.id, rule.id));
                    }
                }
                RuleOutcome::Fired => {
                    matched.push(MatchedRule {
                        policy_id: policy.id.clone(),
                        rule_id: rule.id.clone(),
                        effect: rule.effect,
                    });
                    match rule.effect {
                        Effect::Deny => {
                            denied = true;
                            let mut reason = format!("denied by {}/{}", policy.id, rule.id);
                            if let Some(c) = &rule.conditions {
                                let v = c.violations(subject, ctx.phase);
                                if !v.is_empty() {
                                    let _ = write!(reason, ": {}", v.join("; "));
                                }
                            }
                            reasons.push(reason);
                        }
                        Effect::Allow => {
                            granted = true;
                            granting_policies.insert(policy.id.as_str());
                        }
                    }
                }
            }
        }
    }

    let mut required_ok = true;
    for required in &subject.required_policies {
        if !policies.iter().any(|p| &p.id == required) {
            required_ok = false;
            reasons.push(format!("required policy `{required}` is not loaded"));
        } else if !granting_policies.contains(required.as_str()) {
            required_ok = false;
            reasons.push(format!("required policy `{required}` did not allow"));
        }
    }

    if !denied && !granted {
        reasons.push(DEFAULT_DENY_REASON.to_owned());
    }
    PolicyDecision { allowed: !denied && granted && required_ok, matched_rules: matched, reasons }
}

/// Stable multi-line rendering of a decision.
pub fn explain(decision: &PolicyDecision) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "decision: {}", if decision.allowed { "ALLOWED" } else { "DENIED" });
    if decision.matched_rules.is_empty() {
        out.push_str("matched rules: none\n");
    } else {
        out.push_str("matched rules:\n");
        for m in &decision.matched_rules {
            let _ = writeln!(out, "  {} {}/{}", m.effect.as_str(), m.policy_id, m.rule_id);
        }
    }
    if !decision.reasons.is_empty() {
        out.push_str("reasons:\n");
        for r in &decision.reasons {
            let _ = writeln!(out, "  - {r}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCANNER: &str = "acp://security-scanner.security-scanning.devsecops-team.v3.2.hipaa";
    const DRIFT: &str = "a2a://concept-drift-detector.concept-drift-detection.research-lab.v2.1.prod";

    fn subject(name: &str) -> PolicySubject {
        PolicySubject::new(name.parse().unwrap(), Label::new("default").unwrap())
    }

    fn eval(subject: &PolicySubject, phase: Phase, policies: &[Policy]) -> PolicyDecision {
        evaluate(&EvaluationContext { subject, phase, now: 0 }, policies)
    }

    fn allow_env(env: &str) -> PolicyRule {
        PolicyRule {
            id: format!("allow-{env}"),
            effect: Effect::Allow,
            match_: RuleMatch { environment: Some(env.into()), ..Default::default() },
            conditions: None,
        }
    }

    fn policy(rules: Vec<PolicyRule>) -> Policy {
        Policy { id: "base".into(), description: String::new(), rules }
    }

    #[test]
    fn no_policies_default_deny() {
        let d = eval(&subject(DRIFT), Phase::Admission, &[]);
        assert!(!d.allowed);
        assert!(d.reasons.iter().any(|r| r.contains("default deny")));
        assert!(explain(&d).contains("default deny"));
    }

    #[test]
    fn allow_prod() {
        let d = eval(&subject(DRIFT), Phase::Admission, &[policy(vec![allow_env("prod")])]);
        assert!(d.allowed);
        assert_eq!(d.matched_rules.len(), 1);
        assert!(explain(&d).contains("allow base/allow-prod"));
    }

    #[test]
    fn deny_overrides_for_scanner() {
        let rules = vec![
            PolicyRule { id: "allow-all".into(), effect: Effect::Allow, match_: RuleMatch::default(), conditions: None },
            PolicyRule {
                id: "no-security".into(),
                effect: Effect::Deny,
                match_: RuleMatch { capability: Some("security-*".into()), ..Default::default() },
                conditions: None,
            },
        ];
        let p = [policy(rules)];
        let d = eval(&subject(SCANNER), Phase::Admission, &p);
        assert!(!d.allowed);
        assert_eq!(d.denying_rules().next().unwrap().rule_id, "no-security");
        assert!(eval(&subject(DRIFT), Phase::Admission, &p).allowed);
    }

    #[test]
    fn conditional_deny_fires_only_on_violation() {
        let rules = vec![
            PolicyRule { id: "allow-all".into(), effect: Effect::Allow, match_: RuleMatch::default(), conditions: None },
            PolicyRule {
                id: "cpu-cap".into(),
                effect: Effect::Deny,
                match_: RuleMatch::default(),
                conditions: Some(Conditions { max_cpu_millicores: Some(1000), ..Default::default() }),
            },
        ];
        let p = [policy(rules)];
        let mut s = subject(DRIFT);
        s.resources = Some(Resources { cpu_millicores: Some(500), memory_mebibytes: None });
        assert!(eval(&s, Phase::Admission, &p).allowed);
        s.resources = Some(Resources { cpu_millicores: Some(1500), memory_mebibytes: None });
        let d = eval(&s, Phase::Admission, &p);
        assert!(!d.allowed);
        assert!(d.reasons.iter().any(|r| r.contains("cpu 1500m")));
        // resource limits do not apply at runtime
        assert!(eval(&s, Phase::Runtime, &p).allowed);
    }

    #[test]
    fn allow_conditions_must_hold() {
        let rule = PolicyRule {
            id: "prod-only".into(),
            effect: Effect::Allow,
            match_: RuleMatch::default(),
            conditions: Some(Conditions {
                allowed_environments: Some(vec!["prod".into()]),
                max_cert_validity_seconds: Some(90 * 86_400),
                ..Default::default()
            }),
        };
        let p = [policy(vec![rule])];
        let mut s = subject(DRIFT);
        s.cert_validity_seconds = Some(90 * 86_400);
        assert!(eval(&s, Phase::Runtime, &p).allowed);
        s.cert_validity_seconds = Some(91 * 86_400);
        let d = eval(&s, Phase::Runtime, &p);
        assert!(!d.allowed);
        assert!(d.reasons.iter().any(|r| r.contains("exceeds maximum")));
        let s = subject(SCANNER);
        assert!(!eval(&s, Phase::Runtime, &p).allowed);
    }

    #[test]
    fn required_policies_must_allow() {
        let base = policy(vec![allow_env("prod")]);
        let extra = Policy { id: "agent-security-policy".into(), description: String::new(), rules: vec![] };
        let mut s = subject(DRIFT);
        s.required_policies = vec!["agent-security-policy".into()];
        let d = eval(&s, Phase::Admission, &[base.clone(), extra]);
        assert!(!d.allowed);
        assert!(d.reasons.iter().any(|r| r.contains("did not allow")));
        s.required_policies = vec!["missing".into()];
        assert!(!eval(&s, Phase::Admission, &[base]).allowed);
    }

    #[test]
    fn load_and_reject() {
        let ok = r#"{"policies":[{"id":"p","description":"d","rules":[]}]}"#;
        let p = load_policies(ok).unwrap();
        assert_eq!(p.len(), 1);
        assert!(p[0].rules.is_empty());

        let dup = r#"{"policies":[{"id":"p","rules":[
            {"id":"r","effect":"allow"},{"id":"r","effect":"deny"}]}]}"#;
        let e = load_policies(dup).unwrap_err();
        assert_eq!(e.code(), ErrorCode::PolicyParse);
        assert!(e.message.contains("duplicate rule id"));

        let unknown = r#"{"policies":[{"id":"p","rules":[
            {"id":"r","effect":"allow","conditions":{"foo":1}}]}]}"#;
        let e = load_policies(unknown).unwrap_err();
        assert!(e.message.contains("foo"), "{e}");
        assert!(e.location.starts_with("line 2"));

        assert!(load_policies(r#"{"policies":[{"id":"p","rules":[{"id":"r","effect":"maybe"}]}]}"#).is_err());
        assert!(load_policies(r#"{"policies":[{"id":"p","rules":[{"id":"r","effect":"allow","match":{"protocol":"http"}}]}]}"#).is_err());
    }

    #[test]
    fn globbing() {
        assert!(glob_match("security-*", "security-scanning"));
        assert!(glob_match("*", ""));
        assert!(glob_match("*-detection", "concept-drift-detection"));
        assert!(glob_match("a*b*c", "aXXbYYc"));
        assert!(!glob_match("a*b*c", "aXXbYY"));
        assert!(!glob_match("security-*", "insecurity-x"));
        assert!(glob_match("exact", "exact"));
        assert!(!glob_match("exact", "exactly"));
    }

    #[test]
    fn explain_is_stable() {
        let d = eval(&subject(DRIFT), Phase::Admission, &[policy(vec![allow_env("prod")])]);
        assert_eq!(explain(&d), explain(&d.clone()));
        assert_eq!(explain(&d), "decision: ALLOWED\nmatched rules:\n  allow base/allow-prod\n");
    }
}
