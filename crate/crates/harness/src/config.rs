use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub n_agents: usize,
    pub n_namespaces: usize,
    /// Measured window, after warmup.
    pub duration_seconds: u64,
    pub warmup_seconds: u64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { n_agents: 50, n_namespaces: 5, duration_seconds: 60, warmup_seconds: 10, seed: 42 }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.n_namespaces == 0 {
            return Err(HarnessError::Config("at least one namespace is required".into()));
        }
        if self.n_agents < self.n_namespaces {
            return Err(HarnessError::Config(format!(
                "{} agents cannot fill {} namespaces",
                self.n_agents, self.n_namespaces
            )));
        }
        if self.duration_seconds == 0 {
            return Err(HarnessError::Config("duration must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub n_agents: usize,
    pub n_namespaces: usize,
    pub seed: u64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig { n_agents: 50, n_namespaces: 5, seed: 42 }
    }
}

impl DemoConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        BenchConfig { n_agents: self.n_agents, n_namespaces: self.n_namespaces, ..BenchConfig::default() }.validate()?;
        if self.n_agents < 2 {
            return Err(HarnessError::Config("the handshake ring needs at least two agents".into()));
        }
        Ok(())
    }
}
