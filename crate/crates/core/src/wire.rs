//! JSON bodies exchanged with the registry HTTP API.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::ErrorCode;
use crate::identity::{Did, Timestamp};
use crate::name::{AnsName, Label, NameError, NameQuery, Protocol, VersionReq};

/// Error body for every non-2xx response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("{error}: {message}")]
pub struct ApiError {
    pub error: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
}

impl ApiError {
    pub fn new(error: ErrorCode, message: impl Into<String>) -> Self {
        ApiError { error, message: message.into(), details: None }
    }

    pub fn with_details(mut self, details: serde_json::Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn status(&self) -> u16 {
        self.error.http_status()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChallengeRequest {
    pub agent_name: AnsName,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttestResponse {
    pub granted: bool,
    pub agent_name: AnsName,
    pub capability: Label,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevokeResponse {
    pub name: AnsName,
    pub revoked_at: Timestamp,
    pub by: Did,
}

/// Query-string form of a [`NameQuery`]: `capability`, `provider`,
/// `protocol`, `env`, `agent`, `version`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolveParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capability: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
}

impl ResolveParams {
    pub const KEYS: [&'static str; 6] = ["capability", "provider", "protocol", "env", "agent", "version"];

    /// Builds params from raw query pairs, rejecting unknown keys.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self, ApiError> {
        if let Some(unknown) = pairs.keys().find(|k| !Self::KEYS.contains(&k.as_str())) {
            return Err(ApiError::new(ErrorCode::InvalidName, format!("unknown query parameter `{unknown}`")));
        }
        let get = |k: &str| pairs.get(k).cloned();
        Ok(ResolveParams {
            capability: get("capability"),
            provider: get("provider"),
            protocol: get("protocol"),
            env: get("env"),
            agent: get("agent"),
            version: get("version"),
        })
    }

    pub fn to_query(&self) -> Result<NameQuery, ApiError> {
        let label = |field: &str, v: &Option<String>| -> Result<Option<Label>, ApiError> {
            v.as_deref()
                .map(|s| Label::new(s).map_err(|e| ApiError::new(ErrorCode::InvalidName, format!("{field}: {e}"))))
                .transpose()
        };
        let protocol = self
            .protocol
            .as_deref()
            .map(|p| p.parse::<Protocol>().map_err(|e: NameError| ApiError::new(e.code(), e.to_string())))
            .transpose()?;
        let version_req = self
            .version
            .as_deref()
            .map(|v| v.parse::<VersionReq>().map_err(|e| ApiError::new(ErrorCode::InvalidName, format!("version: {e}"))))
            .transpose()?;
        let query = NameQuery {
            protocol,
            agent_id: label("agent", &self.agent)?,
            capability: label("capability", &self.capability)?,
            provider: label("provider", &self.provider)?,
            extension: label("env", &self.env)?,
            version_req,
        };
        query.validate().map_err(|e| ApiError::new(e.code(), e.to_string()))?;
        Ok(query)
    }

    pub fn from_query(query: &NameQuery) -> Self {
        ResolveParams {
            capability: query.capability.as_ref().map(ToString::to_string),
            provider: query.provider.as_ref().map(ToString::to_string),
            protocol: query.protocol.map(|p| p.to_string()),
            env: query.extension.as_ref().map(ToString::to_string),
            agent: query.agent_id.as_ref().map(ToString::to_string),
            version: query.version_req.map(|v| v.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(items: &[(&str, &str)]) -> BTreeMap<String, String> {
        items.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn params_map_to_query() {
        let p = ResolveParams::from_pairs(&pairs(&[("capability", "concept-drift-detection"), ("version", ">=2.0")])).unwrap();
        let q = p.to_query().unwrap();
        assert_eq!(q.capability.unwrap().as_str(), "concept-drift-detection");
        assert_eq!(ResolveParams::from_query(&p.to_query().unwrap()), p);
    }

    #[test]
    fn bad_params() {
        let code = |items: &[(&str, &str)]| {
            ResolveParams::from_pairs(&pairs(items)).and_then(|p| p.to_query()).unwrap_err().error
        };
        assert_eq!(code(&[("protocol", "xyz")]), ErrorCode::InvalidProtocol);
        assert_eq!(code(&[("capability", "Bad")]), ErrorCode::InvalidName);
        assert_eq!(code(&[]), ErrorCode::InvalidName);
        assert_eq!(code(&[("colour", "red")]), ErrorCode::InvalidName);
        assert_eq!(code(&[("version", "two")]), ErrorCode::InvalidName);
    }
}
