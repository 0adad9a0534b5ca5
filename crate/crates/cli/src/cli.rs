use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::OutputFormat;

/// Operator tool for the Agent Name Service.
///
/// Exit status: 0 success or allowed, 1 operational error, 2 usage error,
/// 3 denied by policy or attestation.
#[derive(Debug, Parser)]
#[command(name = "ansctl", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Registry base URL.
    #[arg(long = "registry", global = true, env = "ANS_REGISTRY_URL")]
    pub registry_url: Option<String>,
    /// JSON array of trusted root certificates [default: <keys>/anchors.json].
    #[arg(long = "anchors", global = true, env = "ANS_ANCHORS_PATH")]
    pub anchors_path: Option<PathBuf>,
    /// Policy document (JSON or YAML).
    #[arg(long = "policy", global = true, env = "ANS_POLICY_PATH")]
    pub policy_path: Option<PathBuf>,
    /// Directory holding the CA and key files [default: ans-keys].
    #[arg(long = "keys", global = true, env = "ANS_KEY_DIR")]
    pub key_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum, env = "ANS_OUTPUT")]
    pub output: Option<OutputFormat>,
    /// TOML settings file [default: ./ansctl.toml when present].
    #[arg(long, global = true, env = "ANS_CONFIG")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an Ed25519 identity key.
    Keygen {
        /// Output file [default: <keys>/agent.key.json].
        #[arg(long)]
        out: Option<PathBuf>,
        /// 32-byte hex seed, for reproducible keys.
        #[arg(long)]
        seed: Option<String>,
    },
    /// Certificate authority management.
    Ca {
        #[command(subcommand)]
        command: CaCommand,
    },
    /// Agent certificates.
    Cert {
        #[command(subcommand)]
        command: CertCommand,
    },
    /// Register an identity with the registry.
    Register {
        #[arg(long)]
        identity: PathBuf,
        #[arg(long)]
        namespace: String,
    },
    /// Find live agents.
    Resolve(QueryArgs),
    /// Prove a capability to the registry.
    Attest {
        #[arg(long)]
        identity: PathBuf,
        /// Defaults to the capability in the agent's name.
        #[arg(long)]
        capability: Option<String>,
    },
    /// Evaluate the policy set against a subject.
    Policy {
        #[command(subcommand)]
        command: PolicyCommand,
    },
    /// Pre-deployment manifest checks.
    Admission {
        #[command(subcommand)]
        command: AdmissionCommand,
    },
    /// Run the registry server.
    Serve {
        /// Server TOML file; ANS_* variables override it.
        #[arg(long)]
        server_config: Option<PathBuf>,
        #[arg(long)]
        listen: Option<SocketAddr>,
        /// Event log; omit to keep the registry in memory.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Latency benchmark against an in-process registry.
    Bench {
        #[arg(long, default_value_t = 50)]
        agents: usize,
        #[arg(long, default_value_t = 5)]
        namespaces: usize,
        /// Measured seconds, after warmup.
        #[arg(long, default_value_t = 60)]
        duration: u64,
        #[arg(long, default_value_t = 10)]
        warmup: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Also run the registration, resolve and policy throughput checks.
        #[arg(long)]
        throughput: bool,
        /// Registration throughput run length in seconds.
        #[arg(long, default_value_t = 300)]
        throughput_seconds: u64,
        /// Write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Scripted lifecycle of many agents, with one rejected rogue.
    Demo {
        #[arg(long, default_value_t = 50)]
        agents: usize,
        #[arg(long, default_value_t = 5)]
        namespaces: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum CaCommand {
    /// Create a root and intermediate and write the trust anchors.
    Init {
        /// Replace an existing CA.
        #[arg(long)]
        force: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum CertCommand {
    /// Issue an agent certificate and write an identity file.
    Issue {
        #[arg(long)]
        name: String,
        /// Key file from `keygen`; a fresh key is generated otherwise.
        #[arg(long)]
        key: Option<PathBuf>,
        /// Extra capabilities to commit to, besides the name's own.
        #[arg(long = "capability")]
        capabilities: Vec<String>,
        #[arg(long, default_value = "90d")]
        validity: String,
        #[arg(long, default_value = "tcp://127.0.0.1:0")]
        endpoint: String,
        /// Output file [default: <keys>/<agent>.identity.json].
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PhaseArg {
    Admission,
    Runtime,
}

#[derive(Debug, Subcommand)]
pub enum PolicyCommand {
    /// Exit 0 when allowed, 3 when denied.
    Test {
        /// Take the subject from a manifest.
        #[arg(long, conflicts_with = "name")]
        manifest: Option<PathBuf>,
        #[arg(long, required_unless_present = "manifest")]
        name: Option<String>,
        #[arg(long, default_value = "default")]
        namespace: String,
        #[arg(long = "capability")]
        capabilities: Vec<String>,
        #[arg(long, value_enum, default_value = "admission")]
        phase: PhaseArg,
    },
}

#[derive(Debug, Subcommand)]
pub enum AdmissionCommand {
    /// Exit 0 when admitted, 3 when rejected.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
        /// Ask the registry instead of evaluating locally.
        #[arg(long)]
        remote: bool,
    },
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub capability: Option<String>,
    #[arg(long)]
    pub provider: Option<String>,
    #[arg(long)]
    pub protocol: Option<String>,
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long)]
    pub agent: Option<String>,
    /// `2.1`, `>=2.0` or `latest`.
    #[arg(long)]
    pub version: Option<String>,
}
