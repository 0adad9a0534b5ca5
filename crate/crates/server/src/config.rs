//! Server configuration: a TOML file with environment overrides.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ans_core::attestation::{DEFAULT_CHALLENGE_CAPACITY, DEFAULT_CHALLENGE_TTL};
use ans_core::registry::DEFAULT_RECORD_TTL;

use crate::alerts::AlertConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub listen: SocketAddr,
    /// Event log. `None` keeps the registry in memory only.
    pub log_path: Option<PathBuf>,
    pub snapshot_path: Option<PathBuf>,
    /// JSON policy document.
    pub policy_path: Option<PathBuf>,
    /// JSON array of trusted root certificates.
    pub anchors_path: Option<PathBuf>,
    pub fsync: bool,
    pub record_ttl_seconds: i64,
    pub challenge_ttl_seconds: i64,
    pub challenge_capacity: usize,
    /// Periodic snapshot interval; 0 disables periodic snapshots.
    pub snapshot_interval_seconds: u64,
    /// How often expired records are swept; 0 disables sweeping.
    pub sweep_interval_seconds: u64,
    pub alerts: AlertConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            log_path: None,
            snapshot_path: None,
            policy_path: None,
            anchors_path: None,
            fsync: true,
            record_ttl_seconds: DEFAULT_RECORD_TTL,
            challenge_ttl_seconds: DEFAULT_CHALLENGE_TTL,
            challenge_capacity: DEFAULT_CHALLENGE_CAPACITY,
            snapshot_interval_seconds: 300,
            sweep_interval_seconds: 60,
            alerts: AlertConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Toml { path: PathBuf, source: toml::de::Error },
    #[error("{var}={value}: {message}")]
    Env { var: &'static str, value: String, message: String },
}

impl ServerConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        ServerConfig::from_toml(&text).map_err(|source| ConfigError::Toml { path: path.into(), source })
    }

    /// Applies `ANS_LISTEN`, `ANS_LOG_PATH`, `ANS_SNAPSHOT_PATH`,
    /// `ANS_POLICY_PATH` and `ANS_ANCHORS_PATH` from `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(value) = lookup("ANS_LISTEN") {
            self.listen = value.parse().map_err(|e: std::net::AddrParseError| ConfigError::Env {
                var: "ANS_LISTEN",
                value: value.clone(),
                message: e.to_string(),
            })?;
        }
        for (var, slot) in [
            ("ANS_LOG_PATH", &mut self.log_path),
            ("ANS_SNAPSHOT_PATH", &mut self.snapshot_path),
            ("ANS_POLICY_PATH", &mut self.policy_path),
            ("ANS_ANCHORS_PATH", &mut self.anchors_path),
        ] {
            if let Some(value) = lookup(var) {
                *slot = Some(PathBuf::from(value));
            }
        }
        Ok(())
    }

    pub fn apply_process_env(&mut self) -> Result<(), ConfigError> {
        self.apply_env(|k| std::env::var(k).ok())
    }
}
