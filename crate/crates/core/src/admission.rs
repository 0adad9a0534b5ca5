//! Pre-deployment validation of agent manifests.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::identity::{validate_chain, Timestamp, TrustAnchors};
use crate::manifest::{AgentManifest, Violation};
use crate::registry::StageTimings;
use crate::policy::{evaluate, explain, EvaluationContext, MatchedRule, Phase, Policy, PolicyDecision};

/// Outcome of admission. `violations` lists manifest and certificate
/// problems; `reasons` is the human-readable union of everything that
/// contributed to the decision.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissionDecision {
    pub allowed: bool,
    pub reasons: Vec<String>,
    pub matched_rules: Vec<MatchedRule>,
    #[serde(default)]
    pub violations: Vec<Violation>,
}

impl AdmissionDecision {
    fn rejected(violations: Vec<Violation>) -> Self {
        AdmissionDecision {
            allowed: false,
            reasons: violations.iter().map(|v| format!("{}: {}", v.code, v.message)).collect(),
            matched_rules: Vec::new(),
            violations,
        }
    }

    fn from_policy(decision: PolicyDecision) -> Self {
        AdmissionDecision {
            allowed: decision.allowed,
            reasons: decision.reasons,
            matched_rules: decision.matched_rules,
            violations: Vec::new(),
        }
    }

    /// Same layout as the policy explanation, with violations as reasons.
    pub fn explain(&self) -> String {
        explain(&PolicyDecision {
            allowed: self.allowed,
            matched_rules: self.matched_rules.clone(),
            reasons: self.reasons.clone(),
        })
    }
}

/// Schema errors make the manifest unusable; the caller reports them as a
/// malformed request rather than a decision.
pub fn schema_check(manifest: &AgentManifest) -> Result<(), Vec<Violation>> {
    let errors = manifest.schema_errors();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

/// Consistency rules, then the attached chain (if any), then admission-phase
/// policy. Stops at the first stage that fails. Never touches registry state.
pub fn validate_manifest(
    manifest: &AgentManifest,
    policies: &[Policy],
    anchors: &TrustAnchors,
    now: Timestamp,
) -> AdmissionDecision {
    validate_manifest_timed(manifest, policies, anchors, now, &mut StageTimings::default())
}

pub fn validate_manifest_timed(
    manifest: &AgentManifest,
    policies: &[Policy],
    anchors: &TrustAnchors,
    now: Timestamp,
    timings: &mut StageTimings,
) -> AdmissionDecision {
    let violations = manifest.consistency_violations();
    if !violations.is_empty() {
        return AdmissionDecision::rejected(violations);
    }
    if let Some(chain) = &manifest.spec.certificate.chain {
        let started = Instant::now();
        let result = validate_chain(chain, anchors, now);
        timings.chain_validation = Some(started.elapsed());
        if let Err(e) = result {
            return AdmissionDecision::rejected(vec![Violation { code: e.code(), message: format!("certificate chain: {e}") }]);
        }
    }
    let subject = match manifest.policy_subject() {
        Ok(subject) => subject,
        Err(v) => return AdmissionDecision::rejected(vec![v]),
    };
    let started = Instant::now();
    let decision = evaluate(&EvaluationContext { subject: &subject, phase: Phase::Admission, now }, policies);
    timings.policy_eval = Some(started.elapsed());
    AdmissionDecision::from_policy(decision)
}
