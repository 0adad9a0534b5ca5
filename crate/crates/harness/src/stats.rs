//! Latency summaries computed from raw samples.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[Duration], q: f64) -> Duration {
    assert!(!sorted.is_empty(), "percentile of no samples");
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl LatencySummary {
    pub fn from_samples(samples: &[Duration]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut sorted = samples.to_vec();
        sorted.sort_unstable();
        let total: Duration = sorted.iter().sum();
        Some(LatencySummary {
            count: sorted.len(),
            mean_ms: ms(total) / sorted.len() as f64,
            p50_ms: ms(percentile(&sorted, 0.50)),
            p95_ms: ms(percentile(&sorted, 0.95)),
            p99_ms: ms(percentile(&sorted, 0.99)),
            max_ms: ms(*sorted.last().expect("non-empty")),
        })
    }
}

/// Shared append-only sample buffer, aggregated after the run.
#[derive(Debug, Default)]
pub struct Sink {
    samples: Mutex<BTreeMap<String, Vec<Duration>>>,
}

impl Sink {
    pub fn record(&self, operation: &str, elapsed: Duration) {
        let mut samples = self.samples.lock().expect("sink lock");
        match samples.get_mut(operation) {
            Some(v) => v.push(elapsed),
            None => {
                samples.insert(operation.to_owned(), vec![elapsed]);
            }
        }
    }

    pub fn extend(&self, operation: &str, elapsed: impl IntoIterator<Item = Duration>) {
        self.samples.lock().expect("sink lock").entry(operation.to_owned()).or_default().extend(elapsed);
    }

    pub fn summaries(&self) -> BTreeMap<String, LatencySummary> {
        self.samples
            .lock()
            .expect("sink lock")
            .iter()
            .filter_map(|(op, v)| LatencySummary::from_samples(v).map(|s| (op.clone(), s)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_on_one_to_hundred() {
        let samples: Vec<Duration> = (1..=100).rev().map(Duration::from_millis).collect();
        let s = LatencySummary::from_samples(&samples).unwrap();
        assert_eq!(s.count, 100);
        assert_eq!(s.p50_ms, 50.0);
        assert_eq!(s.p95_ms, 95.0);
        assert_eq!(s.p99_ms, 99.0);
        assert_eq!(s.max_ms, 100.0);
        assert!((s.mean_ms - 50.5).abs() < 1e-9);
    }

    #[test]
    fn sub_millisecond_samples_keep_their_resolution() {
        let samples = [Duration::from_micros(10), Duration::from_micros(20), Duration::from_micros(90)];
        let s = LatencySummary::from_samples(&samples).unwrap();
        assert!((s.p99_ms - 0.09).abs() < 1e-12);
        assert!((s.p50_ms - 0.02).abs() < 1e-12);
        assert!(LatencySummary::from_samples(&[]).is_none());
    }
}
