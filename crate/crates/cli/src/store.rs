//! On-disk artifacts: key files, the CA, trust anchors, policies and
//! manifests.

use std::path::Path;

use serde::{Deserialize, Serialize};

use ans_client::identity::write_private;
use ans_core::canonical::hex_array;
use ans_core::identity::{KeyPair, TrustAnchors};
use ans_core::policy::load_policies;
use ans_core::{AgentManifest, Certificate, CertificateAuthority, Did, ErrorCode, Policy, PublicKey};

use crate::error::CliError;

pub const CA_FILE: &str = "ca.json";

#[derive(Serialize, Deserialize)]
pub struct KeyFile {
    #[serde(with = "hex_array")]
    pub seed: [u8; 32],
    pub public_key: PublicKey,
    pub did: Did,
}

impl KeyFile {
    pub fn new(keys: &KeyPair) -> Self {
        KeyFile { seed: keys.seed(), public_key: keys.public_key(), did: keys.did() }
    }

    pub fn keys(&self) -> KeyPair {
        KeyPair::from_seed(self.seed)
    }
}

#[derive(Serialize, Deserialize)]
struct StoredCa {
    #[serde(with = "hex_array")]
    root_seed: [u8; 32],
    #[serde(with = "hex_array")]
    intermediate_seed: [u8; 32],
    root: Certificate,
    intermediate: Certificate,
}

pub fn write_secret_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
    write_private(path, text.as_bytes()).map_err(|e| CliError::file(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::file(parent, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| CliError::file(path, e))
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::file(path, e))
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::File {
        path: path.into(),
        message: e.to_string(),
        code: Some(ErrorCode::Malformed),
    })
}

pub fn load_key(path: &Path) -> Result<KeyPair, CliError> {
    let file: KeyFile = parse_json(path, &read(path)?)?;
    let keys = file.keys();
    if keys.public_key() != file.public_key {
        return Err(CliError::File {
            path: path.into(),
            message: "public key does not match the seed".into(),
            code: Some(ErrorCode::Malformed),
        });
    }
    Ok(keys)
}

pub fn save_ca(path: &Path, ca: &CertificateAuthority) -> Result<(), CliError> {
    write_secret_json(
        path,
        &StoredCa {
            root_seed: ca.root_keys.seed(),
            intermediate_seed: ca.intermediate_keys.seed(),
            root: ca.root.clone(),
            intermediate: ca.intermediate.clone(),
        },
    )
}

pub fn load_ca(path: &Path) -> Result<CertificateAuthority, CliError> {
    let stored: StoredCa = parse_json(path, &read(path)?)?;
    Ok(CertificateAuthority {
        root_keys: KeyPair::from_seed(stored.root_seed),
        root: stored.root,
        intermediate_keys: KeyPair::from_seed(stored.intermediate_seed),
        intermediate: stored.intermediate,
    })
}

pub fn load_anchors(path: &Path) -> Result<TrustAnchors, CliError> {
    ans_server::serve::load_anchors(path).map_err(|e| CliError::File {
        path: path.into(),
        message: e.to_string(),
        code: Some(e.code()),
    })
}

/// JSON or YAML policy document. No file, or an empty one, means no
/// policies, which denies everything.
pub fn load_policy(path: Option<&Path>) -> Result<Vec<Policy>, CliError> {
    let Some(path) = path else { return Ok(Vec::new()) };
    let text = read(path)?;
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let json = if text.trim_start().starts_with('{') {
        text
    } else {
        let value: serde_json::Value = serde_yaml::from_str(&text).map_err(|e| CliError::File {
            path: path.into(),
            message: e.to_string(),
            code: Some(ErrorCode::PolicyParse),
        })?;
        value.to_string()
    };
    load_policies(&json).map_err(|e| CliError::File { path: path.into(), message: e.to_string(), code: Some(e.code()) })
}

/// Manifests are accepted as JSON or as YAML of the same shape.
pub fn parse_manifest(text: &str) -> Result<AgentManifest, String> {
    if text.trim_start().starts_with('{') {
        AgentManifest::from_json(text).map_err(|e| e.to_string())
    } else {
        serde_yaml::from_str(text).map_err(|e| e.to_string())
    }
}

pub fn load_manifest(path: &Path) -> Result<AgentManifest, CliError> {
    parse_manifest(&read(path)?).map_err(|message| CliError::File {
        path: path.into(),
        message,
        code: Some(ErrorCode::Malformed),
    })
}
