//! Hash-chained, append-only event log for one ecosystem.
//!
//! Each event commits to its predecessor:
//! `hash = H(index ‖ timestamp ‖ actor ‖ type ‖ payload_digest ‖ prev_hash)`
//! with an all-zero `prev_hash` for the first event. Payloads carry ids and
//! outcomes only, never attribute values.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::b64;
use crate::clock::Timestamp;
use crate::crypto::digest::{hash, Digest};
use crate::encoding::{list_of, Canonical, MapBuilder, Value};
use crate::ids::{CredentialId, Nonce};
use crate::registry::Did;

pub const GENESIS_PREV_HASH: Digest = [0u8; 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventType {
    ConnectionEstablished,
    Issued,
    ConsentGranted,
    ConsentDenied,
    Verified,
    Revoked,
    RegistryWrite,
}

impl EventType {
    pub fn as_str(self) -> &'static str {
        match self {
            EventType::ConnectionEstablished => "ConnectionEstablished",
            EventType::Issued => "Issued",
            EventType::ConsentGranted => "ConsentGranted",
            EventType::ConsentDenied => "ConsentDenied",
            EventType::Verified => "Verified",
            EventType::Revoked => "Revoked",
            EventType::RegistryWrite => "RegistryWrite",
        }
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Minimal event metadata.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventPayload {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub credential_ids: Vec<CredentialId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<Nonce>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl EventPayload {
    pub fn credential(id: CredentialId) -> Self {
        EventPayload { credential_ids: vec![id], ..Self::default() }
    }

    pub fn with_outcome(mut self, outcome: impl Into<String>) -> Self {
        self.outcome = Some(outcome.into());
        self
    }

    pub fn with_request(mut self, request_id: Nonce) -> Self {
        self.request_id = Some(request_id);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn digest(&self) -> Digest {
        let request = self.request_id.map(|r| Value::List(vec![r.to_value()])).unwrap_or(Value::List(vec![]));
        let value = MapBuilder::new()
            .field("credential_ids", list_of(&self.credential_ids))
            .field("request_id", request)
            .opt_text("outcome", self.outcome.as_deref())
            .opt_text("note", self.note.as_deref())
            .build();
        hash(&value.encode())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub index: u64,
    pub timestamp: Timestamp,
    pub actor_did: Did,
    pub event_type: EventType,
    pub payload: EventPayload,
    #[serde(with = "b64::array")]
    pub payload_digest: Digest,
    #[serde(with = "b64::array")]
    pub prev_hash: Digest,
    #[serde(with = "b64::array")]
    pub hash: Digest,
}

impl AuditEvent {
    pub fn compute_hash(&self) -> Digest {
        event_hash(self.index, self.timestamp, &self.actor_did, self.event_type, &self.payload_digest, &self.prev_hash)
    }

    pub fn references(&self, id: &CredentialId) -> bool {
        self.payload.credential_ids.contains(id)
    }
}

fn event_hash(
    index: u64,
    timestamp: Timestamp,
    actor: &Did,
    event_type: EventType,
    payload_digest: &Digest,
    prev_hash: &Digest,
) -> Digest {
    let value = MapBuilder::new()
        .uint("index", index)
        .text("timestamp", &timestamp.to_iso())
        .text("actor", actor.as_str())
        .text("type", event_type.as_str())
        .bytes("payload_digest", payload_digest)
        .bytes("prev_hash", prev_hash)
        .build();
    hash(&value.encode())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainStatus {
    Ok,
    Broken(u64),
}

impl fmt::Display for ChainStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainStatus::Ok => f.write_str("Ok"),
            ChainStatus::Broken(i) => write!(f, "Broken(index={i})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuditError {
    #[error("audit chain broken at index {0}")]
    ChainBroken(u64),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Recomputes every link. Reports the first position that fails.
pub fn verify_chain(events: &[AuditEvent]) -> ChainStatus {
    let mut prev = GENESIS_PREV_HASH;
    for (i, e) in events.iter().enumerate() {
        let ok = e.index == i as u64
            && e.prev_hash == prev
            && e.payload.digest() == e.payload_digest
            && e.compute_hash() == e.hash;
        if !ok {
            return ChainStatus::Broken(i as u64);
        }
        prev = e.hash;
    }
    ChainStatus::Ok
}

/// Every event mentioning `id`, in log order. Refuses a broken chain.
pub fn trace_credential(events: &[AuditEvent], id: &CredentialId) -> Result<Vec<AuditEvent>, AuditError> {
    if let ChainStatus::Broken(i) = verify_chain(events) {
        return Err(AuditError::ChainBroken(i));
    }
    Ok(events.iter().filter(|e| e.references(id)).cloned().collect())
}

pub fn export_jsonl(events: &[AuditEvent]) -> String {
    events.iter().map(|e| serde_json::to_string(e).expect("event serializes") + "\n").collect()
}

pub fn import_jsonl(text: &str) -> Result<Vec<AuditEvent>, AuditError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| AuditError::Parse { line: i + 1, reason: e.to_string() }))
        .collect()
}

/// The single writer of an ecosystem's log.
#[derive(Debug, Clone, Default)]
pub struct AuditLog {
    events: Vec<AuditEvent>,
}

impl AuditLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, timestamp: Timestamp, actor_did: &Did, event_type: EventType, payload: EventPayload) -> &AuditEvent {
        let index = self.events.len() as u64;
        let prev_hash = self.events.last().map_or(GENESIS_PREV_HASH, |e| e.hash);
        let payload_digest = payload.digest();
        let hash = event_hash(index, timestamp, actor_did, event_type, &payload_digest, &prev_hash);
        self.events.push(AuditEvent {
            index,
            timestamp,
            actor_did: actor_did.clone(),
            event_type,
            payload,
            payload_digest,
            prev_hash,
            hash,
        });
        self.events.last().expect("just pushed")
    }

    pub fn events(&self) -> &[AuditEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn verify(&self) -> ChainStatus {
        verify_chain(&self.events)
    }

    pub fn trace(&self, id: &CredentialId) -> Result<Vec<AuditEvent>, AuditError> {
        trace_credential(&self.events, id)
    }

    pub fn export_jsonl(&self) -> String {
        export_jsonl(&self.events)
    }
}
