//! Three-message mutual authentication between agents.
//!
//! ```text
//! initiator                                   responder
//!   Hello    { chain_I, nonce_I }          ->
//!            <-  Response { chain_R, nonce_R, sig_R(serial_I, nonce_I, nonce_R) }
//!   Finish   { sig_I(serial_R, nonce_R, nonce_I) } ->
//! ```
//!
//! Each signature covers SHA-256 of the canonical `[serial, nonce, nonce]`
//! array. Either side may send `Abort` instead of its next message.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use ans_core::attestation::Nonce;
use ans_core::canonical::{self, hex_array};
use ans_core::identity::{validate_chain, Signature, Timestamp, TrustAnchors};
use ans_core::registry::AgentRecord;
use ans_core::{AnsName, CertificateChain, Did, ErrorCode};

use crate::error::ClientError;
use crate::identity::AgentIdentity;
use crate::transport::Transport;

pub const DEFAULT_HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HandshakeMessage {
    Hello { chain: CertificateChain, nonce: Nonce },
    Response { chain: CertificateChain, nonce: Nonce, signature: Signature },
    Finish { signature: Signature },
    Abort { code: ErrorCode, message: String },
}

impl HandshakeMessage {
    pub fn encode(&self) -> Vec<u8> {
        canonical::canonical_bytes_of(self)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ClientError> {
        serde_json::from_slice(bytes).map_err(|e| ClientError::peer(ErrorCode::Malformed, format!("handshake message: {e}")))
    }
}

/// Digest each side signs: binds the peer's certificate serial and both nonces.
pub fn signing_digest(peer_serial: u64, peer_nonce: &Nonce, own_nonce: &Nonce) -> [u8; 32] {
    Sha256::digest(canonical::canonical_bytes_of(&json!([peer_serial, peer_nonce, own_nonce]))).into()
}

pub fn transcript_hash(initiator_serial: u64, initiator_nonce: &Nonce, responder_serial: u64, responder_nonce: &Nonce) -> [u8; 32] {
    Sha256::digest(canonical::canonical_bytes_of(&json!({
        "initiator_nonce": initiator_nonce,
        "initiator_serial": initiator_serial,
        "responder_nonce": responder_nonce,
        "responder_serial": responder_serial,
    })))
    .into()
}

/// An authenticated peer relationship.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub peer_did: Did,
    pub peer_name: AnsName,
    pub peer_chain: CertificateChain,
    #[serde(with = "hex_array")]
    pub transcript_hash: [u8; 32],
    pub established_at: Timestamp,
    pub(crate) send_seq: u64,
    pub(crate) recv_seq: u64,
}

impl Session {
    fn new(peer_chain: CertificateChain, transcript_hash: [u8; 32], now: Timestamp) -> Result<Self, ClientError> {
        let peer_name = peer_chain
            .agent
            .subject_name
            .clone()
            .ok_or_else(|| ClientError::peer(ErrorCode::ChainInvalid, "peer certificate has no subject name"))?;
        Ok(Session {
            peer_did: peer_chain.agent.subject_did.clone(),
            peer_name,
            peer_chain,
            transcript_hash,
            established_at: now,
            send_seq: 0,
            recv_seq: 0,
        })
    }
}

async fn recv_message<T: Transport>(transport: &mut T) -> Result<HandshakeMessage, ClientError> {
    let bytes = transport.recv().await?;
    match HandshakeMessage::decode(&bytes)? {
        HandshakeMessage::Abort { code, message } => Err(ClientError::peer(code, format!("peer aborted: {message}"))),
        other => Ok(other),
    }
}

/// Sends `Abort` for `err` (best effort) and hands the error back.
async fn abort<T: Transport>(transport: &mut T, err: ClientError) -> ClientError {
    let code = err.code().unwrap_or(ErrorCode::Internal);
    let _ = transport.send(HandshakeMessage::Abort { code, message: err.to_string() }.encode()).await;
    err
}

fn chain_error(e: ans_core::identity::ChainError) -> ClientError {
    ClientError::peer(e.code(), format!("peer chain: {e}"))
}

fn unexpected(what: &str) -> ClientError {
    ClientError::peer(ErrorCode::Malformed, format!("expected {what}"))
}

async fn with_timeout<F, R>(limit: Duration, fut: F) -> Result<R, ClientError>
where
    F: std::future::Future<Output = Result<R, ClientError>>,
{
    tokio::time::timeout(limit, fut)
        .await
        .unwrap_or_else(|_| Err(ClientError::peer(ErrorCode::HandshakeTimeout, format!("no answer within {limit:?}"))))
}

/// Initiator side. When `expected` is given, the responder must present a
/// certificate for that record's name and DID.
pub async fn initiate<T: Transport>(
    identity: &AgentIdentity,
    expected: Option<&AgentRecord>,
    anchors: &TrustAnchors,
    transport: &mut T,
    now: Timestamp,
    limit: Duration,
) -> Result<Session, ClientError> {
    with_timeout(limit, async {
        let own_nonce = Nonce::random();
        transport.send(HandshakeMessage::Hello { chain: identity.chain().clone(), nonce: own_nonce }.encode()).await?;

        let HandshakeMessage::Response { chain, nonce, signature } = recv_message(transport).await? else {
            return Err(abort(transport, unexpected("response")).await);
        };
        if let Err(e) = validate_chain(&chain, anchors, now) {
            return Err(abort(transport, chain_error(e)).await);
        }
        if let Some(record) = expected {
            if chain.agent.subject_did != record.did || chain.agent.subject_name.as_ref() != Some(&record.name) {
                let err = ClientError::peer(ErrorCode::NameMismatch, format!("responder is not {}", record.name));
                return Err(abort(transport, err).await);
            }
        }
        let own_serial = identity.chain().agent.serial;
        if !chain.agent.public_key.verify(&signing_digest(own_serial, &own_nonce, &nonce), &signature) {
            let err = ClientError::peer(ErrorCode::BadSignature, "responder signature does not verify");
            return Err(abort(transport, err).await);
        }

        let finish = identity.keys().sign(&signing_digest(chain.agent.serial, &nonce, &own_nonce));
        transport.send(HandshakeMessage::Finish { signature: finish }.encode()).await?;
        let transcript = transcript_hash(own_serial, &own_nonce, chain.agent.serial, &nonce);
        Session::new(chain, transcript, now)
    })
    .await
}

/// Responder side.
pub async fn respond<T: Transport>(
    identity: &AgentIdentity,
    anchors: &TrustAnchors,
    transport: &mut T,
    now: Timestamp,
    limit: Duration,
) -> Result<Session, ClientError> {
    with_timeout(limit, async {
        let HandshakeMessage::Hello { chain, nonce: peer_nonce } = recv_message(transport).await? else {
            return Err(abort(transport, unexpected("hello")).await);
        };
        if let Err(e) = validate_chain(&chain, anchors, now) {
            return Err(abort(transport, chain_error(e)).await);
        }
        let own_nonce = Nonce::random();
        let signature = identity.keys().sign(&signing_digest(chain.agent.serial, &peer_nonce, &own_nonce));
        transport
            .send(HandshakeMessage::Response { chain: identity.chain().clone(), nonce: own_nonce, signature }.encode())
            .await?;

        let HandshakeMessage::Finish { signature } = recv_message(transport).await? else {
            return Err(abort(transport, unexpected("finish")).await);
        };
        let own_serial = identity.chain().agent.serial;
        if !chain.agent.public_key.verify(&signing_digest(own_serial, &own_nonce, &peer_nonce), &signature) {
            let err = ClientError::peer(ErrorCode::BadSignature, "initiator signature does not verify");
            return Err(abort(transport, err).await);
        }
        let transcript = transcript_hash(chain.agent.serial, &peer_nonce, own_serial, &own_nonce);
        Session::new(chain, transcript, now)
    })
    .await
}
