//! Evaluation harness for the Agent Name Service.
//!
//! * [`bench`]: latency percentiles under a seeded 50-agent workload and
//!   throughput floors
//! * [`security`]: the attack scenarios
//! * [`demo`]: a scripted lifecycle run with an injected bad manifest
//! * [`props`]: randomized property suites over the core invariants

pub mod bench;
pub mod config;
pub mod demo;
mod error;
pub mod fixtures;
pub mod props;
pub mod security;
pub mod stats;
pub mod workload;

pub use bench::{run_benchmark, run_throughput, BenchReport, ThroughputConfig, ThroughputReport};
pub use config::{BenchConfig, DemoConfig};
pub use demo::{run_demo, DemoReport};
pub use error::HarnessError;
pub use security::{run_security_suite, ScenarioResult};
pub use stats::LatencySummary;
