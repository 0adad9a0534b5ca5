//! Declarative agent manifests and their consistency rules.
//!
//! ```yaml
//! apiVersion: ans.io/v1
//! kind: Agent
//! metadata: { name: concept-drift-detector, namespace: mlops-system }
//! spec:
//!   ansName: "a2a://concept-drift-detector.concept-drift-detection.research-lab.v2.1.prod"
//!   capabilities: [concept-drift-detection, statistical-analysis, alert-generation]
//!   provider: research-lab
//!   version: "2.1"
//!   environment: prod
//!   certificate: { issuer: ans-ca, validity: 90d }
//!   policies: [agent-security-policy, data-access-policy]
//! ```

use serde::{Deserialize, Serialize};

use crate::error::ErrorCode;
use crate::identity::CertificateChain;
use crate::name::{AnsName, Label};
use crate::policy::{PolicySubject, Resources};

pub const API_VERSION: &str = "ans.io/v1";
pub const KIND: &str = "Agent";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AgentManifest {
    pub api_version: String,
    pub kind: String,
    pub metadata: ManifestMetadata,
    pub spec: ManifestSpec,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestMetadata {
    pub name: String,
    pub namespace: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ManifestSpec {
    pub ans_name: String,
    pub capabilities: Vec<String>,
    pub provider: String,
    pub version: String,
    pub environment: String,
    pub certificate: ManifestCertificate,
    #[serde(default)]
    pub policies: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resources: Option<ManifestResources>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestCertificate {
    pub issuer: String,
    /// `<n>d|h|m|s`
    pub validity: String,
    /// Optional chain checked during admission.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<CertificateChain>,
}

/// Kubernetes-style quantities: cpu `500m` or `2`, memory `256Mi` or `1Gi`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestResources {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpu: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory: Option<String>,
}

/// A rule the manifest breaks, with the code it maps to.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ErrorCode,
    pub message: String,
}

impl Violation {
    fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Violation { code, message: message.into() }
    }
}

/// Parses `90d`, `12h`, `30m` or `45s` into seconds.
pub fn parse_duration(text: &str) -> Option<i64> {
    let text = text.trim();
    let unit = text.chars().last()?;
    let scale = match unit {
        'd' => 86_400,
        'h' => 3_600,
        'm' => 60,
        's' => 1,
        _ => return None,
    };
    let digits = &text[..text.len() - 1];
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse::<i64>().ok()?.checked_mul(scale).filter(|&s| s > 0)
}

pub fn parse_cpu_millicores(text: &str) -> Option<u64> {
    let text = text.trim();
    if let Some(milli) = text.strip_suffix('m') {
        return milli.parse().ok();
    }
    match text.split_once('.') {
        None => text.parse::<u64>().ok()?.checked_mul(1000),
        Some((whole, frac)) if !frac.is_empty() && frac.len() <= 3 && frac.bytes().all(|b| b.is_ascii_digit()) => {
            let whole: u64 = if whole.is_empty() { 0 } else { whole.parse().ok()? };
            let frac: u64 = format!("{frac:0<3}").parse().ok()?;
            whole.checked_mul(1000)?.checked_add(frac)
        }
        _ => None,
    }
}

pub fn parse_memory_mebibytes(text: &str) -> Option<u64> {
    let text = text.trim();
    if let Some(n) = text.strip_suffix("Gi") {
        n.parse::<u64>().ok()?.checked_mul(1024)
    } else if let Some(n) = text.strip_suffix("Mi") {
        n.parse().ok()
    } else {
        None
    }
}

impl AgentManifest {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Envelope checks whose failure makes the document unusable.
    pub fn schema_errors(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.api_version != API_VERSION {
            out.push(Violation::new(ErrorCode::Malformed, format!("apiVersion must be `{API_VERSION}`")));
        }
        if self.kind != KIND {
            out.push(Violation::new(ErrorCode::Malformed, format!("kind must be `{KIND}`")));
        }
        out
    }

    pub fn ans_name(&self) -> Result<AnsName, Violation> {
        AnsName::parse(&self.spec.ans_name)
            .map_err(|e| Violation::new(ErrorCode::InvalidName, format!("spec.ansName: {e}")))
    }

    /// Validity requested in `spec.certificate.validity`, in seconds.
    pub fn requested_validity(&self) -> Option<i64> {
        parse_duration(&self.spec.certificate.validity)
    }

    pub fn resources(&self) -> Result<Option<Resources>, Violation> {
        let Some(r) = &self.spec.resources else { return Ok(None) };
        let cpu = r
            .cpu
            .as_deref()
            .map(|c| parse_cpu_millicores(c).ok_or_else(|| Violation::new(ErrorCode::Malformed, format!("bad cpu quantity `{c}`"))))
            .transpose()?;
        let memory = r
            .memory
            .as_deref()
            .map(|m| {
                parse_memory_mebibytes(m).ok_or_else(|| Violation::new(ErrorCode::Malformed, format!("bad memory quantity `{m}`")))
            })
            .transpose()?;
        Ok(Some(Resources { cpu_millicores: cpu, memory_mebibytes: memory }))
    }

    /// Field-level rules: labels, name/spec agreement, durations.
    pub fn consistency_violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if Label::new(self.metadata.name.as_str()).is_err() {
            out.push(Violation::new(ErrorCode::InvalidLabel, format!("metadata.name `{}` is not a label", self.metadata.name)));
        }
        if Label::new(self.metadata.namespace.as_str()).is_err() {
            out.push(Violation::new(
                ErrorCode::InvalidLabel,
                format!("metadata.namespace `{}` is not a label", self.metadata.namespace),
            ));
        }
        for cap in &self.spec.capabilities {
            if Label::new(cap.as_str()).is_err() {
                out.push(Violation::new(ErrorCode::InvalidLabel, format!("capability `{cap}` is not a label")));
            }
        }
        match self.ans_name() {
            Err(v) => out.push(v),
            Ok(name) => {
                if !self.spec.capabilities.iter().any(|c| c == name.capability.as_str()) {
                    out.push(Violation::new(
                        ErrorCode::NameMismatch,
                        format!("name capability `{}` is not listed in spec.capabilities", name.capability),
                    ));
                }
                if name.provider.as_str() != self.spec.provider {
                    out.push(Violation::new(
                        ErrorCode::NameMismatch,
                        format!("name provider `{}` differs from spec.provider `{}`", name.provider, self.spec.provider),
                    ));
                }
                if format!("v{}", name.version) != format!("v{}", self.spec.version) {
                    out.push(Violation::new(
                        ErrorCode::NameMismatch,
                        format!("name version `v{}` differs from spec.version `{}`", name.version, self.spec.version),
                    ));
                }
                if name.extension.as_str() != self.spec.environment {
                    out.push(Violation::new(
                        ErrorCode::NameMismatch,
                        format!(
                            "name extension `{}` differs from spec.environment `{}`",
                            name.extension, self.spec.environment
                        ),
                    ));
                }
                if let Some(chain) = &self.spec.certificate.chain {
                    if chain.agent.subject_name.as_ref() != Some(&name) {
                        out.push(Violation::new(ErrorCode::NameMismatch, "attached certificate is for a different name"));
                    }
                }
            }
        }
        if self.requested_validity().is_none() {
            out.push(Violation::new(
                ErrorCode::Malformed,
                format!("certificate validity `{}` is not a duration", self.spec.certificate.validity),
            ));
        }
        if let Err(v) = self.resources() {
            out.push(v);
        }
        out
    }

    /// Policy view of the manifest. Fails when the name does not parse.
    pub fn policy_subject(&self) -> Result<PolicySubject, Violation> {
        let name = self.ans_name()?;
        let namespace = Label::new(self.metadata.namespace.as_str())
            .map_err(|e| Violation::new(ErrorCode::InvalidLabel, e.to_string()))?;
        let caps: Vec<Label> = self.spec.capabilities.iter().filter_map(|c| Label::new(c.as_str()).ok()).collect();
        let validity = match &self.spec.certificate.chain {
            Some(chain) => Some(chain.agent.validity_seconds()),
            None => self.requested_validity(),
        };
        let mut subject = PolicySubject::new(name, namespace).with_capabilities(&caps);
        subject.cert_validity_seconds = validity;
        subject.resources = self.resources().ok().flatten();
        subject.required_policies = self.spec.policies.clone();
        Ok(subject)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn listing() -> AgentManifest {
        serde_json::from_value(serde_json::json!({
            "apiVersion": "ans.io/v1",
            "kind": "Agent",
            "metadata": {"name": "concept-drift-detector", "namespace": "mlops-system"},
            "spec": {
                "ansName": "a2a://concept-drift-detector.concept-drift-detection.research-lab.v2.1.prod",
                "capabilities": ["concept-drift-detection", "statistical-analysis", "alert-generation"],
                "provider": "research-lab",
                "version": "2.1",
                "environment": "prod",
                "certificate": {"issuer": "ans-ca", "validity": "90d"},
                "policies": ["agent-security-policy", "data-access-policy"]
            }
        }))
        .unwrap()
    }

    #[test]
    fn listing_is_consistent() {
        let m = listing();
        assert!(m.schema_errors().is_empty());
        assert_eq!(m.consistency_violations(), vec![]);
        let s = m.policy_subject().unwrap();
        assert_eq!(s.cert_validity_seconds, Some(7_776_000));
        assert_eq!(s.capabilities.len(), 3);
        assert_eq!(s.required_policies.len(), 2);
    }

    #[test]
    fn capability_not_listed() {
        let mut m = listing();
        m.spec.capabilities.retain(|c| c != "concept-drift-detection");
        let v = m.consistency_violations();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].code, ErrorCode::NameMismatch);
    }

    #[test]
    fn environment_mismatch() {
        let mut m = listing();
        m.spec.environment = "staging".into();
        assert!(m.consistency_violations().iter().any(|v| v.code == ErrorCode::NameMismatch));
        let mut m = listing();
        m.spec.version = "2.2".into();
        assert!(m.consistency_violations().iter().any(|v| v.code == ErrorCode::NameMismatch));
        let mut m = listing();
        m.spec.provider = "other".into();
        assert!(m.consistency_violations().iter().any(|v| v.code == ErrorCode::NameMismatch));
    }

    #[test]
    fn bad_name_and_envelope() {
        let mut m = listing();
        m.spec.ans_name = "http://x".into();
        assert_eq!(m.consistency_violations()[0].code, ErrorCode::InvalidName);
        m.kind = "Pod".into();
        assert_eq!(m.schema_errors().len(), 1);
    }

    #[test]
    fn durations() {
        assert_eq!(parse_duration("90d"), Some(7_776_000));
        assert_eq!(parse_duration("12h"), Some(43_200));
        assert_eq!(parse_duration("30m"), Some(1_800));
        assert_eq!(parse_duration("45s"), Some(45));
        for bad in ["", "d", "90", "-1d", "0d", "1.5d", "9w"] {
            assert_eq!(parse_duration(bad), None, "{bad}");
        }
    }

    #[test]
    fn quantities() {
        assert_eq!(parse_cpu_millicores("500m"), Some(500));
        assert_eq!(parse_cpu_millicores("2"), Some(2000));
        assert_eq!(parse_cpu_millicores("0.5"), Some(500));
        assert_eq!(parse_cpu_millicores("1.25"), Some(1250));
        assert_eq!(parse_cpu_millicores("x"), None);
        assert_eq!(parse_memory_mebibytes("256Mi"), Some(256));
        assert_eq!(parse_memory_mebibytes("2Gi"), Some(2048));
        assert_eq!(parse_memory_mebibytes("2G"), None);
    }
}
