//! Seeded per-agent operation schedules.

use std::time::Duration;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Steps generated per agent; agents cycle through their schedule.
pub const SCHEDULE_LEN: usize = 512;
/// Pause before each step, drawn uniformly from this range (milliseconds).
pub const THINK_MS: (u64, u64) = (20, 80);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum ResolveKind {
    /// By the namespace capability at this index.
    Capability(usize),
    /// Same, keeping only the newest version of each name.
    Latest(usize),
    /// By the capability every agent holds.
    Shared,
    Provider(usize),
    /// Protocol plus environment.
    Protocol(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Op {
    Resolve(ResolveKind),
    Renew,
    Attest,
    Admission,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Step {
    pub op: Op,
    #[serde(serialize_with = "millis")]
    pub think: Duration,
}

fn millis<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u64(d.as_millis() as u64)
}

/// Resolve-heavy mix: 75% resolve, 10% attest, 8% renew, 7% admission.
pub fn schedule(seed: u64, agent: usize, n_namespaces: usize, len: usize) -> Vec<Step> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(agent as u64);
    (0..len)
        .map(|_| {
            let roll = rng.gen_range(0..100);
            let ns = rng.gen_range(0..n_namespaces);
            let op = match roll {
                0..=74 => Op::Resolve(match roll % 5 {
                    0 | 1 => ResolveKind::Capability(ns),
                    2 => ResolveKind::Latest(ns),
                    3 => ResolveKind::Provider(ns),
                    _ if roll < 40 => ResolveKind::Shared,
                    _ => ResolveKind::Protocol(ns % 3),
                }),
                75..=84 => Op::Attest,
                85..=92 => Op::Renew,
                _ => Op::Admission,
            };
            let think = Duration::from_millis(rng.gen_range(THINK_MS.0..=THINK_MS.1));
            Step { op, think }
        })
        .collect()
}

/// Fingerprint of every agent's schedule.
pub fn digest(seed: u64, n_agents: usize, n_namespaces: usize) -> String {
    let mut h = Sha256::new();
    for agent in 0..n_agents {
        let steps = schedule(seed, agent, n_namespaces, SCHEDULE_LEN);
        h.update(serde_json::to_vec(&steps).expect("steps serialize"));
    }
    hex::encode(h.finalize())
}
