//! Settings resolved from flags, then environment variables, then an
//! optional TOML file, then defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::CliError;

pub const DEFAULT_REGISTRY_URL: &str = "http://127.0.0.1:8080";
pub const DEFAULT_KEY_DIR: &str = "ans-keys";
pub const DEFAULT_CONFIG_FILE: &str = "ansctl.toml";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Human,
    Json,
}

/// The file form: every field optional.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub registry_url: Option<String>,
    pub anchors_path: Option<PathBuf>,
    pub policy_path: Option<PathBuf>,
    pub key_dir: Option<PathBuf>,
    pub output: Option<OutputFormat>,
}

/// Flag or environment values; clap has already applied that precedence.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub registry_url: Option<String>,
    pub anchors_path: Option<PathBuf>,
    pub policy_path: Option<PathBuf>,
    pub key_dir: Option<PathBuf>,
    pub output: Option<OutputFormat>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CliConfig {
    pub registry_url: String,
    pub anchors_path: PathBuf,
    pub policy_path: Option<PathBuf>,
    pub key_dir: PathBuf,
    pub output: OutputFormat,
}

impl CliConfig {
    pub fn resolve(overrides: Overrides, file: FileConfig) -> Self {
        let key_dir = overrides.key_dir.or(file.key_dir).unwrap_or_else(|| DEFAULT_KEY_DIR.into());
        CliConfig {
            registry_url: overrides.registry_url.or(file.registry_url).unwrap_or_else(|| DEFAULT_REGISTRY_URL.into()),
            anchors_path: overrides.anchors_path.or(file.anchors_path).unwrap_or_else(|| key_dir.join("anchors.json")),
            policy_path: overrides.policy_path.or(file.policy_path),
            output: overrides.output.or(file.output).unwrap_or_default(),
            key_dir,
        }
    }

    /// Reads `explicit` if given, otherwise `ansctl.toml` in the working
    /// directory when it exists.
    pub fn load(overrides: Overrides, explicit: Option<&Path>) -> Result<Self, CliError> {
        let file = match explicit {
            Some(path) => read_file(path)?,
            None if Path::new(DEFAULT_CONFIG_FILE).exists() => read_file(Path::new(DEFAULT_CONFIG_FILE))?,
            None => FileConfig::default(),
        };
        Ok(CliConfig::resolve(overrides, file))
    }
}

fn read_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::file(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}
