//! Threshold alerts over a metrics snapshot and the registry contents.

use serde::{Deserialize, Serialize};

use ans_core::identity::{remaining_validity, Timestamp, DAY_SECONDS};
use ans_core::registry::AgentRecord;

use crate::metrics::MetricsSnapshot;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlertConfig {
    /// Fires when auth failures / attestations exceeds this.
    pub error_rate_threshold: f64,
    /// Fires when an active agent certificate has less than this left.
    pub cert_expiry_warning_seconds: i64,
    /// Fires when the challenge store is fuller than this fraction.
    pub resource_usage_threshold: f64,
}

impl Default for AlertConfig {
    fn default() -> Self {
        AlertConfig {
            error_rate_threshold: 0.05,
            cert_expiry_warning_seconds: 30 * DAY_SECONDS,
            resource_usage_threshold: 0.80,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Critical,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Warning => "warning",
            Severity::Critical => "critical",
        }
    }
}

pub const RULE_ERROR_RATE: &str = "auth_error_rate";
pub const RULE_CERT_EXPIRY: &str = "cert_expiry";
pub const RULE_RESOURCE_USAGE: &str = "resource_usage";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alert {
    pub rule: String,
    pub severity: Severity,
    pub subject: String,
    pub message: String,
}

/// Alerts sorted by `(rule, subject)`. Pure in its inputs.
pub fn evaluate_alerts(
    snapshot: &MetricsSnapshot,
    records: &[AgentRecord],
    config: &AlertConfig,
    now: Timestamp,
) -> Vec<Alert> {
    let mut alerts = Vec::new();

    let attempts = snapshot.counter("attestations_total");
    let failures = snapshot.counter("auth_failures_total");
    let rate = failures as f64 / attempts.max(1) as f64;
    if rate > config.error_rate_threshold {
        alerts.push(Alert {
            rule: RULE_ERROR_RATE.into(),
            severity: Severity::Critical,
            subject: "attestation".into(),
            message: format!(
                "{failures} of {attempts} attestations failed ({:.1}% > {:.1}%)",
                rate * 100.0,
                config.error_rate_threshold * 100.0
            ),
        });
    }

    for record in records.iter().filter(|r| r.is_live(now)) {
        let left = remaining_validity(&record.chain.agent, now);
        if left < config.cert_expiry_warning_seconds {
            alerts.push(Alert {
                rule: RULE_CERT_EXPIRY.into(),
                severity: Severity::Warning,
                subject: record.name.to_string(),
                message: format!("certificate expires in {}d {}h", left / DAY_SECONDS, (left % DAY_SECONDS) / 3600),
            });
        }
    }

    if snapshot.challenge_store_utilization > config.resource_usage_threshold {
        alerts.push(Alert {
            rule: RULE_RESOURCE_USAGE.into(),
            severity: Severity::Warning,
            subject: "challenge_store".into(),
            message: format!("challenge store {:.0}% full", snapshot.challenge_store_utilization * 100.0),
        });
    }

    alerts.sort_by(|a, b| (&a.rule, &a.subject).cmp(&(&b.rule, &b.subject)));
    alerts
}
