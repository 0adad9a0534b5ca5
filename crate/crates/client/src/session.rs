//! Signed post-handshake messages.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use ans_core::canonical::{self, hex_array};
use ans_core::identity::{KeyPair, Signature};
use ans_core::ErrorCode;

use crate::error::ClientError;
use crate::handshake::Session;
use crate::transport::Transport;

/// A session message signed by its sender, bound to the transcript and a
/// per-direction sequence number.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedMessage {
    pub seq: u64,
    #[serde(with = "hex_array")]
    pub transcript: [u8; 32],
    pub body: Value,
    pub signature: Signature,
}

fn signing_bytes(seq: u64, transcript: &[u8; 32], body: &Value) -> Vec<u8> {
    canonical::canonical_bytes_of(&json!({ "body": body, "seq": seq, "transcript": hex::encode(transcript) }))
}

impl Session {
    pub fn seal(&mut self, keys: &KeyPair, body: Value) -> SignedMessage {
        let seq = self.send_seq;
        self.send_seq += 1;
        let signature = keys.sign(&signing_bytes(seq, &self.transcript_hash, &body));
        SignedMessage { seq, transcript: self.transcript_hash, body, signature }
    }

    /// Checks transcript, order and the peer's signature.
    pub fn open(&mut self, msg: SignedMessage) -> Result<Value, ClientError> {
        if msg.transcript != self.transcript_hash {
            return Err(ClientError::peer(ErrorCode::BadSignature, "message belongs to another session"));
        }
        if !self.peer_chain.agent.public_key.verify(&signing_bytes(msg.seq, &msg.transcript, &msg.body), &msg.signature) {
            return Err(ClientError::peer(ErrorCode::BadSignature, "session message signature does not verify"));
        }
        if msg.seq != self.recv_seq {
            return Err(ClientError::peer(ErrorCode::NonceReplay, format!("expected seq {}, got {}", self.recv_seq, msg.seq)));
        }
        self.recv_seq += 1;
        Ok(msg.body)
    }

    pub async fn send<T: Transport, B: Serialize>(&mut self, transport: &mut T, keys: &KeyPair, body: &B) -> Result<(), ClientError> {
        let body = serde_json::to_value(body).map_err(|e| ClientError::Decode(e.to_string()))?;
        let msg = self.seal(keys, body);
        transport.send(canonical::canonical_bytes_of(&msg)).await?;
        Ok(())
    }

    pub async fn recv<T: Transport, B: DeserializeOwned>(&mut self, transport: &mut T) -> Result<B, ClientError> {
        let bytes = transport.recv().await?;
        let msg: SignedMessage =
            serde_json::from_slice(&bytes).map_err(|e| ClientError::peer(ErrorCode::Malformed, e.to_string()))?;
        let body = self.open(msg)?;
        serde_json::from_value(body).map_err(|e| ClientError::peer(ErrorCode::Malformed, e.to_string()))
    }
}
