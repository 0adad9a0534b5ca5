//! HTTP client for the registry API.

use std::time::Duration;

use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use url::Url;

use ans_core::admission::AdmissionDecision;
use ans_core::attestation::{CapabilityProof, Challenge};
use ans_core::identity::Timestamp;
use ans_core::registry::{AgentRecord, LifecycleRequest, RegistrationRequest};
use ans_core::wire::{ApiError, AttestResponse, ChallengeRequest, ResolveParams, RevokeResponse};
use ans_core::{AgentManifest, AnsName, Label, NameQuery};

use crate::error::ClientError;
use crate::identity::AgentIdentity;

#[derive(Clone, Debug)]
pub struct RegistryClient {
    base: Url,
    http: reqwest::Client,
}

impl RegistryClient {
    pub fn new(base: &str) -> Result<Self, ClientError> {
        let base = Url::parse(base).map_err(|e| ClientError::Transport(format!("registry url `{base}`: {e}")))?;
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(RegistryClient { base, http })
    }

    pub fn base_url(&self) -> &Url {
        &self.base
    }

    fn url(&self, segments: &[&str]) -> Url {
        let mut url = self.base.clone();
        url.path_segments_mut().expect("http urls have paths").pop_if_empty().extend(segments);
        url
    }

    async fn send<B: Serialize>(&self, method: Method, url: Url, body: Option<&B>) -> Result<(StatusCode, Vec<u8>), ClientError> {
        let mut req = self.http.request(method, url);
        if let Some(body) = body {
            req = req.json(body);
        }
        let resp = req.send().await.map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status();
        let bytes = resp.bytes().await.map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok((status, bytes.to_vec()))
    }

    async fn call<B: Serialize, T: DeserializeOwned>(&self, method: Method, url: Url, body: Option<&B>) -> Result<T, ClientError> {
        let (status, bytes) = self.send(method, url, body).await?;
        if status.is_success() {
            serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode(e.to_string()))
        } else {
            Err(api_error(status, &bytes))
        }
    }

    pub async fn register(&self, req: &RegistrationRequest) -> Result<AgentRecord, ClientError> {
        self.call(Method::POST, self.url(&["v1", "agents"]), Some(req)).await
    }

    pub async fn renew(&self, name: &AnsName, req: &LifecycleRequest) -> Result<AgentRecord, ClientError> {
        self.call(Method::POST, self.url(&["v1", "agents", &name.to_string(), "renew"]), Some(req)).await
    }

    pub async fn revoke(&self, name: &AnsName, req: &LifecycleRequest) -> Result<RevokeResponse, ClientError> {
        self.call(Method::DELETE, self.url(&["v1", "agents", &name.to_string()]), Some(req)).await
    }

    /// Results in registry order.
    pub async fn resolve(&self, query: &NameQuery) -> Result<Vec<AgentRecord>, ClientError> {
        self.resolve_params(&ResolveParams::from_query(query)).await
    }

    /// Sends the parameters as given, so the registry does the validation.
    pub async fn resolve_params(&self, params: &ResolveParams) -> Result<Vec<AgentRecord>, ClientError> {
        let bytes = self.resolve_raw(params).await?;
        serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode(e.to_string()))
    }

    /// The response body exactly as the registry sent it.
    pub async fn resolve_raw(&self, params: &ResolveParams) -> Result<Vec<u8>, ClientError> {
        let mut url = self.url(&["v1", "resolve"]);
        {
            let mut pairs = url.query_pairs_mut();
            let fields = [
                ("capability", &params.capability),
                ("provider", &params.provider),
                ("protocol", &params.protocol),
                ("env", &params.env),
                ("agent", &params.agent),
                ("version", &params.version),
            ];
            for (k, v) in fields {
                if let Some(v) = v {
                    pairs.append_pair(k, v);
                }
            }
        }
        let (status, bytes) = self.send::<()>(Method::GET, url, None).await?;
        if status.is_success() {
            Ok(bytes)
        } else {
            Err(api_error(status, &bytes))
        }
    }

    pub async fn challenge(&self, agent_name: &AnsName) -> Result<Challenge, ClientError> {
        let body = ChallengeRequest { agent_name: agent_name.clone() };
        self.call(Method::POST, self.url(&["v1", "challenge"]), Some(&body)).await
    }

    pub async fn attest(&self, proof: &CapabilityProof) -> Result<AttestResponse, ClientError> {
        self.call(Method::POST, self.url(&["v1", "attest"]), Some(proof)).await
    }

    /// Challenge, prove and attest in one go.
    pub async fn attest_capability(
        &self,
        identity: &AgentIdentity,
        capability: &Label,
        now: Timestamp,
    ) -> Result<AttestResponse, ClientError> {
        let secret = identity.secret(capability).ok_or_else(|| {
            ClientError::peer(ans_core::ErrorCode::UnknownCapability, format!("no secret for `{capability}`"))
        })?;
        let challenge = self.challenge(identity.name()).await?;
        let proof = ans_core::attestation::prove(&challenge, secret, identity.keys(), identity.name(), now)
            .map_err(|e| ClientError::peer(e.code(), e.to_string()))?;
        self.attest(&proof).await
    }

    pub async fn validate_manifest(&self, manifest: &AgentManifest) -> Result<AdmissionDecision, ClientError> {
        self.call(Method::POST, self.url(&["v1", "admission", "validate"]), Some(manifest)).await
    }

    pub async fn metrics(&self) -> Result<String, ClientError> {
        self.text(self.url(&["v1", "metrics"])).await
    }

    pub async fn healthz(&self) -> Result<bool, ClientError> {
        Ok(self.text(self.url(&["v1", "healthz"])).await? == "ok")
    }

    async fn text(&self, url: Url) -> Result<String, ClientError> {
        let resp = self.http.get(url).send().await.map_err(|e| ClientError::Transport(e.to_string()))?;
        if resp.status() != StatusCode::OK {
            return Err(ClientError::Decode(format!("status {}", resp.status())));
        }
        resp.text().await.map_err(|e| ClientError::Transport(e.to_string()))
    }
}

fn api_error(status: StatusCode, bytes: &[u8]) -> ClientError {
    match serde_json::from_slice::<ApiError>(bytes) {
        Ok(err) => ClientError::Api(err),
        Err(_) => ClientError::Decode(format!("{status}: {}", String::from_utf8_lossy(bytes))),
    }
}

/// Registers `identity` under `namespace` at `registry_url`.
pub async fn register_with(identity: &AgentIdentity, namespace: Label, registry_url: &str) -> Result<AgentRecord, ClientError> {
    RegistryClient::new(registry_url)?.register(&identity.registration_request(namespace)).await
}

pub async fn discover(registry_url: &str, query: &NameQuery) -> Result<Vec<AgentRecord>, ClientError> {
    RegistryClient::new(registry_url)?.resolve(query).await
}
