//! Counters, latency histograms and the text exposition format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::Duration;

use hdrhistogram::Histogram;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use ans_core::identity::{remaining_validity, Timestamp};
use ans_core::registry::AgentRecord;

use crate::alerts::Alert;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    Registration,
    Discovery,
    Attestation,
    PolicyEval,
    ChainValidation,
}

impl Operation {
    pub const ALL: [Operation; 5] = [
        Operation::Registration,
        Operation::Discovery,
        Operation::Attestation,
        Operation::PolicyEval,
        Operation::ChainValidation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Operation::Registration => "registration",
            Operation::Discovery => "discovery",
            Operation::Attestation => "attestation",
            Operation::PolicyEval => "policy_eval",
            Operation::ChainValidation => "chain_validation",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Counter {
    RegistrationsTotal,
    DiscoveryQueriesTotal,
    AttestationsTotal,
    AuthFailuresTotal,
    PolicyViolationsTotal,
}

impl Counter {
    pub const ALL: [Counter; 5] = [
        Counter::RegistrationsTotal,
        Counter::DiscoveryQueriesTotal,
        Counter::AttestationsTotal,
        Counter::AuthFailuresTotal,
        Counter::PolicyViolationsTotal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Counter::RegistrationsTotal => "registrations_total",
            Counter::DiscoveryQueriesTotal => "discovery_queries_total",
            Counter::AttestationsTotal => "attestations_total",
            Counter::AuthFailuresTotal => "auth_failures_total",
            Counter::PolicyViolationsTotal => "policy_violations_total",
        }
    }
}

// microseconds, up to one minute, 3 significant digits
const HIST_MAX_MICROS: u64 = 60_000_000;

fn new_histogram() -> Histogram<u64> {
    Histogram::new_with_bounds(1, HIST_MAX_MICROS, 3).expect("static bounds are valid")
}

struct Timer {
    hist: Histogram<u64>,
    sum_micros: u64,
}

pub struct Metrics {
    counters: [AtomicU64; 5],
    timers: [Mutex<Timer>; 5],
    sampling: AtomicBool,
    samples: [Mutex<Vec<Duration>>; 5],
}

impl Default for Metrics {
    fn default() -> Self {
        Metrics {
            counters: Default::default(),
            timers: std::array::from_fn(|_| Mutex::new(Timer { hist: new_histogram(), sum_micros: 0 })),
            sampling: AtomicBool::new(false),
            samples: Default::default(),
        }
    }
}

impl std::fmt::Debug for Metrics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Metrics").finish_non_exhaustive()
    }
}

fn counter_slot(c: Counter) -> usize {
    Counter::ALL.iter().position(|x| *x == c).expect("listed")
}

fn op_slot(op: Operation) -> usize {
    Operation::ALL.iter().position(|x| *x == op).expect("listed")
}

impl Metrics {
    pub fn incr(&self, counter: Counter) {
        self.counters[counter_slot(counter)].fetch_add(1, Ordering::Relaxed);
    }

    pub fn counter(&self, counter: Counter) -> u64 {
        self.counters[counter_slot(counter)].load(Ordering::Relaxed)
    }

    pub fn observe(&self, op: Operation, elapsed: Duration) {
        let micros = (elapsed.as_micros() as u64).clamp(1, HIST_MAX_MICROS);
        let mut timer = self.timers[op_slot(op)].lock();
        timer.hist.record(micros).expect("value clamped into bounds");
        timer.sum_micros += elapsed.as_micros() as u64;
        drop(timer);
        if self.sampling.load(Ordering::Relaxed) {
            self.samples[op_slot(op)].lock().push(elapsed);
        }
    }

    /// Keeps every observed duration, unbucketed, until taken. Off by default.
    pub fn set_sampling(&self, on: bool) {
        self.sampling.store(on, Ordering::Relaxed);
    }

    pub fn take_samples(&self, op: Operation) -> Vec<Duration> {
        std::mem::take(&mut *self.samples[op_slot(op)].lock())
    }

    /// Point-in-time view. Gauges are computed from `records` at `now`.
    pub fn snapshot(
        &self,
        records: &[AgentRecord],
        now: Timestamp,
        expiry_window_seconds: i64,
        challenge_store_utilization: f64,
    ) -> MetricsSnapshot {
        let counters = Counter::ALL.iter().map(|c| (c.as_str().to_owned(), self.counter(*c))).collect();
        let histograms = Operation::ALL
            .iter()
            .map(|op| {
                let timer = self.timers[op_slot(*op)].lock();
                let q = |p: f64| if timer.hist.is_empty() { 0.0 } else { timer.hist.value_at_quantile(p) as f64 / 1e6 };
                let summary = HistogramSummary {
                    count: timer.hist.len(),
                    sum_seconds: timer.sum_micros as f64 / 1e6,
                    p50_seconds: q(0.5),
                    p95_seconds: q(0.95),
                    p99_seconds: q(0.99),
                };
                (*op, summary)
            })
            .collect();
        let live: Vec<&AgentRecord> = records.iter().filter(|r| r.is_live(now)).collect();
        MetricsSnapshot {
            counters,
            histograms,
            active_agents: live.len() as u64,
            certs_expiring_within_30d: live
                .iter()
                .filter(|r| remaining_validity(&r.chain.agent, now) < expiry_window_seconds)
                .count() as u64,
            challenge_store_utilization,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HistogramSummary {
    pub count: u64,
    pub sum_seconds: f64,
    pub p50_seconds: f64,
    pub p95_seconds: f64,
    pub p99_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub counters: BTreeMap<String, u64>,
    pub histograms: BTreeMap<Operation, HistogramSummary>,
    pub active_agents: u64,
    pub certs_expiring_within_30d: u64,
    /// Outstanding challenges over store capacity.
    pub challenge_store_utilization: f64,
}

impl MetricsSnapshot {
    pub fn counter(&self, name: &str) -> u64 {
        self.counters.get(name).copied().unwrap_or(0)
    }

    /// `<name>{<label>="<value>",...} <number>` per line.
    pub fn render(&self, alerts: &[Alert]) -> String {
        let mut out = String::new();
        for (name, value) in &self.counters {
            let _ = writeln!(out, "{name} {value}");
        }
        for (op, h) in &self.histograms {
            let op = op.as_str();
            for (q, v) in [("0.5", h.p50_seconds), ("0.95", h.p95_seconds), ("0.99", h.p99_seconds)] {
                let _ = writeln!(out, "operation_latency_seconds{{operation=\"{op}\",quantile=\"{q}\"}} {v}");
            }
            let _ = writeln!(out, "operation_latency_seconds_count{{operation=\"{op}\"}} {}", h.count);
            let _ = writeln!(out, "operation_latency_seconds_sum{{operation=\"{op}\"}} {}", h.sum_seconds);
        }
        let _ = writeln!(out, "active_agents {}", self.active_agents);
        let _ = writeln!(out, "certs_expiring_within_30d {}", self.certs_expiring_within_30d);
        let _ = writeln!(out, "challenge_store_utilization {}", self.challenge_store_utilization);
        for a in alerts {
            let _ = writeln!(
                out,
                "alert_firing{{rule=\"{}\",severity=\"{}\",subject=\"{}\"}} 1",
                a.rule,
                a.severity.as_str(),
                escape(&a.subject)
            );
        }
        out
    }
}

fn escape(value: &str) -> String {
    value.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}

/// Parses exposition text back into `(series, value)` pairs.
pub fn parse_exposition(text: &str) -> BTreeMap<String, f64> {
    text.lines()
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| {
            let (series, value) = l.rsplit_once(' ')?;
            Some((series.to_owned(), value.parse().ok()?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_only_while_enabled() {
        let m = Metrics::default();
        m.observe(Operation::PolicyEval, Duration::from_micros(5));
        m.set_sampling(true);
        m.observe(Operation::PolicyEval, Duration::from_nanos(1_234));
        m.observe(Operation::Discovery, Duration::from_micros(7));
        assert_eq!(m.take_samples(Operation::PolicyEval), vec![Duration::from_nanos(1_234)]);
        assert!(m.take_samples(Operation::PolicyEval).is_empty());
        assert_eq!(m.take_samples(Operation::Discovery).len(), 1);
    }

    #[test]
    fn counts_and_quantiles() {
        let m = Metrics::default();
        for ms in 1..=100u64 {
            m.observe(Operation::Discovery, Duration::from_millis(ms));
        }
        m.incr(Counter::RegistrationsTotal);
        let snap = m.snapshot(&[], 0, 30 * 86_400, 0.0);
        let h = snap.histograms[&Operation::Discovery];
        assert_eq!(h.count, 100);
        assert!((h.p99_seconds - 0.099).abs() < 0.001);
        assert!((h.sum_seconds - 5.050).abs() < 1e-9);
        assert_eq!(snap.counter("registrations_total"), 1);

        let parsed = parse_exposition(&snap.render(&[]));
        assert_eq!(parsed["registrations_total"], 1.0);
        assert_eq!(parsed["operation_latency_seconds_count{operation=\"discovery\"}"], 100.0);
        assert_eq!(parsed["operation_latency_seconds_count{operation=\"registration\"}"], 0.0);
    }
}
