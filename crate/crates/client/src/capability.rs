//! Capability checks between authenticated peers.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use ans_core::attestation::{prove, verify, CapabilityProof, Challenge, ChallengeStore};
use ans_core::identity::{KeyPair, Timestamp, TrustAnchors};
use ans_core::{ErrorCode, Label};

use crate::error::ClientError;
use crate::handshake::Session;
use crate::identity::AgentIdentity;
use crate::transport::Transport;

pub const DEFAULT_EXCHANGE_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CapabilityMessage {
    Request { capability: Label },
    Challenge { challenge: Challenge },
    Proof { proof: CapabilityProof },
    Verdict(Verdict),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub capability: Label,
    pub granted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<ErrorCode>,
    #[serde(default)]
    pub message: String,
}

impl Verdict {
    fn denied(capability: Label, code: ErrorCode, message: impl Into<String>) -> Self {
        Verdict { capability, granted: false, code: Some(code), message: message.into() }
    }

    fn into_result(self) -> Result<Verdict, ClientError> {
        match (self.granted, self.code) {
            (true, _) => Ok(self),
            (false, code) => Err(ClientError::peer(code.unwrap_or(ErrorCode::Internal), self.message)),
        }
    }
}

async fn timed<F, R>(limit: Duration, fut: F) -> Result<R, ClientError>
where
    F: std::future::Future<Output = Result<R, ClientError>>,
{
    tokio::time::timeout(limit, fut)
        .await
        .unwrap_or_else(|_| Err(ClientError::peer(ErrorCode::HandshakeTimeout, "capability exchange timed out")))
}

/// Prover side: asks the peer to verify `capability`.
pub async fn request_capability<T: Transport>(
    session: &mut Session,
    transport: &mut T,
    capability: &Label,
    prover: &AgentIdentity,
    now: Timestamp,
) -> Result<Verdict, ClientError> {
    let secret = prover.secret(capability).cloned();
    request_capability_with(session, transport, capability, prover.keys(), |challenge| {
        let secret = secret.as_ref().ok_or_else(|| {
            ClientError::peer(ErrorCode::UnknownCapability, format!("no secret for `{capability}`"))
        })?;
        prove(challenge, secret, prover.keys(), prover.name(), now).map_err(|e| ClientError::peer(e.code(), e.to_string()))
    })
    .await
}

/// Like [`request_capability`] with a caller-supplied proof.
pub async fn request_capability_with<T, F>(
    session: &mut Session,
    transport: &mut T,
    capability: &Label,
    keys: &KeyPair,
    make_proof: F,
) -> Result<Verdict, ClientError>
where
    T: Transport,
    F: FnOnce(&Challenge) -> Result<CapabilityProof, ClientError>,
{
    timed(DEFAULT_EXCHANGE_TIMEOUT, async {
        session.send(transport, keys, &CapabilityMessage::Request { capability: capability.clone() }).await?;
        let challenge = match session.recv(transport).await? {
            CapabilityMessage::Challenge { challenge } => challenge,
            CapabilityMessage::Verdict(v) => return v.into_result(),
            _ => return Err(ClientError::peer(ErrorCode::Malformed, "expected a challenge")),
        };
        let proof = make_proof(&challenge)?;
        session.send(transport, keys, &CapabilityMessage::Proof { proof }).await?;
        match session.recv(transport).await? {
            CapabilityMessage::Verdict(v) => v.into_result(),
            _ => Err(ClientError::peer(ErrorCode::Malformed, "expected a verdict")),
        }
    })
    .await
}

/// Verifier side: answers one capability request. The commitment comes from
/// the peer's validated certificate, never from the request. `store` should
/// outlive the session so nonces stay single-use across sessions.
pub async fn serve_capability_request<T: Transport>(
    session: &mut Session,
    transport: &mut T,
    verifier_keys: &KeyPair,
    anchors: &TrustAnchors,
    store: &ChallengeStore,
    now: Timestamp,
) -> Result<Verdict, ClientError> {
    timed(DEFAULT_EXCHANGE_TIMEOUT, async {
        let capability = match session.recv(transport).await? {
            CapabilityMessage::Request { capability } => capability,
            _ => return Err(ClientError::peer(ErrorCode::Malformed, "expected a capability request")),
        };
        let Some(commitment) = session.peer_chain.agent.commitment_for(capability.as_str()).cloned() else {
            let verdict = Verdict::denied(
                capability.clone(),
                ErrorCode::UnknownCapability,
                format!("{} has no commitment for `{capability}`", session.peer_name),
            );
            session.send(transport, verifier_keys, &CapabilityMessage::Verdict(verdict.clone())).await?;
            return Ok(verdict);
        };
        let challenge = store.issue(session.peer_name.clone(), now);
        session.send(transport, verifier_keys, &CapabilityMessage::Challenge { challenge }).await?;
        let proof = match session.recv(transport).await? {
            CapabilityMessage::Proof { proof } => proof,
            _ => return Err(ClientError::peer(ErrorCode::Malformed, "expected a proof")),
        };
        let verdict = match verify(&proof, &commitment, &session.peer_chain, anchors, store, now) {
            Ok(()) => Verdict { capability: capability.clone(), granted: true, code: None, message: String::new() },
            Err(e) => Verdict::denied(capability.clone(), e.code(), e.to_string()),
        };
        session.send(transport, verifier_keys, &CapabilityMessage::Verdict(verdict.clone())).await?;
        Ok(verdict)
    })
    .await
}
