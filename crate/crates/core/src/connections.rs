//! Peer-DID connections and the authenticated message channel between agents.
//!
//! A connection starts with an [`Invitation`] carrying a fresh peer DID and
//! key. When the inviter is a trust anchor the invitation also carries a
//! signature by its registered public key, letting the invitee authenticate
//! the anchor against the registry. The invitee answers with a
//! [`ConnectionResponse`] holding its own fresh peer DID; both sides then
//! hold mirrored `Active` connections. Peer DIDs never touch the registry.
//!
//! Traffic is carried in [`Envelope`]s signed by the sender's connection key
//! with strictly increasing sequence numbers. Delivery goes through the
//! in-process [`MessageBus`], FIFO per inbox.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::b64;
use crate::clock::Timestamp;
use crate::crypto::{keygen, sign, verify_sig, GroupElement, GroupParams, KeyPair, SchnorrSignature};
use crate::encoding::{Canonical, MapBuilder};
use crate::ids::Nonce;
use crate::registry::{key_fingerprint, Did, Registry, PEER_DID_PREFIX};

pub mod payload_types {
    pub const CREDENTIAL_OFFER: &str = "credential-offer";
    pub const CREDENTIAL_REQUEST: &str = "credential-request";
    pub const CREDENTIAL_ISSUE: &str = "credential-issue";
    pub const PROOF_REQUEST: &str = "proof-request";
    pub const PRESENTATION: &str = "presentation";
    pub const ACK: &str = "ack";
    pub const PROBLEM_REPORT: &str = "problem-report";

    pub const ALL: [&str; 7] =
        [CREDENTIAL_OFFER, CREDENTIAL_REQUEST, CREDENTIAL_ISSUE, PROOF_REQUEST, PRESENTATION, ACK, PROBLEM_REPORT];
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConnectionError {
    #[error("agent has no registered public DID")]
    NoPublicDid,
    #[error("invitation already used")]
    InvitationReused,
    #[error("unknown invitation")]
    UnknownInvitation,
    #[error("anchor DID {0} cannot be resolved on the registry")]
    AnchorUnresolvable(Did),
    #[error("anchor signature on the invitation does not verify")]
    AnchorAuthenticationFailed,
    #[error("envelope signature does not verify")]
    BadSignature,
    #[error("sequence {got} but expected {expected}")]
    ReplayedOrOutOfOrder { expected: u64, got: u64 },
    #[error("connection is closed")]
    ConnectionClosed,
    #[error("connection is not active")]
    NotActive,
    #[error("envelope is addressed to another connection")]
    Misaddressed,
    #[error("unknown payload type `{0}`")]
    UnknownPayloadType(String),
}

pub fn peer_did(key: &GroupElement) -> Did {
    Did::new(format!("{PEER_DID_PREFIX}{}", key_fingerprint(key)))
}

/// How the relationship was formed. Recorded as metadata only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FormationMode {
    FaceToFace,
    #[default]
    Website,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConnectionState {
    Invited,
    Active,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorProof {
    pub public_did: Did,
    pub signature: SchnorrSignature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Invitation {
    pub invitation_id: Nonce,
    pub peer_did: Did,
    pub key: GroupElement,
    pub inbox_id: String,
    pub label: String,
    pub mode: FormationMode,
    pub anchor: Option<AnchorProof>,
}

impl Invitation {
    fn anchor_bytes(&self, public_did: &Did) -> Vec<u8> {
        MapBuilder::new()
            .text("domain", "cpx/invitation-anchor")
            .field("invitation_id", self.invitation_id.to_value())
            .text("peer_did", self.peer_did.as_str())
            .field("key", self.key.to_value())
            .text("inbox_id", &self.inbox_id)
            .text("public_did", public_did.as_str())
            .build()
            .encode()
    }
}

/// Inviter-side record: the invitation plus its private connection key.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PendingInvitation {
    pub invitation: Invitation,
    keypair: KeyPair,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectionResponse {
    pub invitation_id: Nonce,
    pub peer_did: Did,
    pub key: GroupElement,
    pub inbox_id: String,
    pub label: String,
    /// Proof of possession of the invitee's connection key.
    pub signature: SchnorrSignature,
}

impl ConnectionResponse {
    fn signing_bytes(invitation_id: &Nonce, peer_did: &Did, key: &GroupElement, inbox_id: &str) -> Vec<u8> {
        MapBuilder::new()
            .text("domain", "cpx/connection-response")
            .field("invitation_id", invitation_id.to_value())
            .text("peer_did", peer_did.as_str())
            .field("key", key.to_value())
            .text("inbox_id", inbox_id)
            .build()
            .encode()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Connection {
    pub my_peer_did: Did,
    my_keypair: KeyPair,
    pub their_peer_did: Did,
    pub their_key: GroupElement,
    pub their_inbox: String,
    pub their_label: String,
    /// Set when the counterparty authenticated as a registered trust anchor.
    pub their_public_did: Option<Did>,
    pub state: ConnectionState,
    pub mode: FormationMode,
    pub next_send_seq: u64,
    pub next_recv_seq: u64,
}

impl Connection {
    pub fn is_active(&self) -> bool {
        self.state == ConnectionState::Active
    }

    pub fn my_key(&self) -> &GroupElement {
        self.my_keypair.public()
    }
}

/// Creates an invitation. With `anchor`, the public DID key signs the fresh
/// peer identity so the invitee can authenticate the inviter.
pub fn create_invitation<R: RngCore + ?Sized>(
    params: &GroupParams,
    inbox_id: &str,
    label: &str,
    anchor: Option<(&Did, &KeyPair)>,
    mode: FormationMode,
    rng: &mut R,
) -> PendingInvitation {
    let keypair = keygen(params, rng);
    let mut invitation = Invitation {
        invitation_id: Nonce::random(rng),
        peer_did: peer_did(keypair.public()),
        key: keypair.public().clone(),
        inbox_id: inbox_id.to_string(),
        label: label.to_string(),
        mode,
        anchor: None,
    };
    if let Some((public_did, public_keys)) = anchor {
        let signature = sign(params, public_keys, &invitation.anchor_bytes(public_did), rng);
        invitation.anchor = Some(AnchorProof { public_did: public_did.clone(), signature });
    }
    PendingInvitation { invitation, keypair }
}

/// Invitee side: authenticates an anchor invitation and builds the invitee's
/// connection plus the response for the inviter.
pub fn accept_invitation<R: RngCore + ?Sized>(
    params: &GroupParams,
    registry: &Registry,
    invitation: &Invitation,
    inbox_id: &str,
    label: &str,
    rng: &mut R,
) -> Result<(Connection, ConnectionResponse), ConnectionError> {
    let their_public_did = match &invitation.anchor {
        Some(anchor) => {
            let doc = registry
                .resolve(&anchor.public_did)
                .map_err(|_| ConnectionError::AnchorUnresolvable(anchor.public_did.clone()))?;
            if !verify_sig(params, &doc.verification_key, &invitation.anchor_bytes(&anchor.public_did), &anchor.signature) {
                return Err(ConnectionError::AnchorAuthenticationFailed);
            }
            Some(anchor.public_did.clone())
        }
        None => None,
    };
    if !params.contains(&invitation.key) || peer_did(&invitation.key) != invitation.peer_did {
        return Err(ConnectionError::BadSignature);
    }
    let keypair = keygen(params, rng);
    let my_peer_did = peer_did(keypair.public());
    let signature = sign(
        params,
        &keypair,
        &ConnectionResponse::signing_bytes(&invitation.invitation_id, &my_peer_did, keypair.public(), inbox_id),
        rng,
    );
    let response = ConnectionResponse {
        invitation_id: invitation.invitation_id,
        peer_did: my_peer_did.clone(),
        key: keypair.public().clone(),
        inbox_id: inbox_id.to_string(),
        label: label.to_string(),
        signature,
    };
    let connection = Connection {
        my_peer_did,
        my_keypair: keypair,
        their_peer_did: invitation.peer_did.clone(),
        their_key: invitation.key.clone(),
        their_inbox: invitation.inbox_id.clone(),
        their_label: invitation.label.clone(),
        their_public_did,
        state: ConnectionState::Active,
        mode: invitation.mode,
        next_send_seq: 0,
        next_recv_seq: 0,
    };
    Ok((connection, response))
}

/// Inviter side: checks the response and activates the connection.
pub fn complete_invitation(
    params: &GroupParams,
    pending: PendingInvitation,
    response: &ConnectionResponse,
) -> Result<Connection, ConnectionError> {
    if response.invitation_id != pending.invitation.invitation_id {
        return Err(ConnectionError::UnknownInvitation);
    }
    let bytes =
        ConnectionResponse::signing_bytes(&response.invitation_id, &response.peer_did, &response.key, &response.inbox_id);
    if peer_did(&response.key) != response.peer_did || !verify_sig(params, &response.key, &bytes, &response.signature) {
        return Err(ConnectionError::BadSignature);
    }
    Ok(Connection {
        my_peer_did: pending.invitation.peer_did.clone(),
        my_keypair: pending.keypair,
        their_peer_did: response.peer_did.clone(),
        their_key: response.key.clone(),
        their_inbox: response.inbox_id.clone(),
        their_label: response.label.clone(),
        their_public_did: None,
        state: ConnectionState::Active,
        mode: pending.invitation.mode,
        next_send_seq: 0,
        next_recv_seq: 0,
    })
}

/// Inviter-held invitations; each may be redeemed once.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct InvitationBook {
    pending: BTreeMap<Nonce, PendingInvitation>,
    used: BTreeSet<Nonce>,
}

impl InvitationBook {
    pub fn insert(&mut self, pending: PendingInvitation) {
        self.pending.insert(pending.invitation.invitation_id, pending);
    }

    pub fn take(&mut self, id: &Nonce) -> Result<PendingInvitation, ConnectionError> {
        if self.used.contains(id) {
            return Err(ConnectionError::InvitationReused);
        }
        let pending = self.pending.remove(id).ok_or(ConnectionError::UnknownInvitation)?;
        self.used.insert(*id);
        Ok(pending)
    }

    pub fn is_used(&self, id: &Nonce) -> bool {
        self.used.contains(id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    pub from_peer_did: Did,
    pub to_peer_did: Did,
    pub seq: u64,
    pub payload_type: String,
    #[serde(with = "b64::vec")]
    pub payload: Vec<u8>,
    pub signature: SchnorrSignature,
}

impl Envelope {
    pub fn signing_bytes(from: &Did, to: &Did, seq: u64, payload_type: &str, payload: &[u8]) -> Vec<u8> {
        MapBuilder::new()
            .text("domain", "cpx/envelope")
            .text("from", from.as_str())
            .text("to", to.as_str())
            .uint("seq", seq)
            .text("type", payload_type)
            .bytes("payload", payload)
            .build()
            .encode()
    }
}

pub fn send<R: RngCore + ?Sized>(
    params: &GroupParams,
    conn: &mut Connection,
    payload_type: &str,
    payload: Vec<u8>,
    rng: &mut R,
) -> Result<Envelope, ConnectionError> {
    match conn.state {
        ConnectionState::Closed => return Err(ConnectionError::ConnectionClosed),
        ConnectionState::Invited => return Err(ConnectionError::NotActive),
        ConnectionState::Active => {}
    }
    if !payload_types::ALL.contains(&payload_type) {
        return Err(ConnectionError::UnknownPayloadType(payload_type.to_string()));
    }
    let seq = conn.next_send_seq;
    let bytes = Envelope::signing_bytes(&conn.my_peer_did, &conn.their_peer_did, seq, payload_type, &payload);
    let signature = sign(params, &conn.my_keypair, &bytes, rng);
    conn.next_send_seq += 1;
    Ok(Envelope {
        from_peer_did: conn.my_peer_did.clone(),
        to_peer_did: conn.their_peer_did.clone(),
        seq,
        payload_type: payload_type.to_string(),
        payload,
        signature,
    })
}

/// Verifies origin, integrity and ordering, then advances the receive counter.
pub fn receive(params: &GroupParams, conn: &mut Connection, envelope: &Envelope) -> Result<Vec<u8>, ConnectionError> {
    match conn.state {
        ConnectionState::Closed => return Err(ConnectionError::ConnectionClosed),
        ConnectionState::Invited => return Err(ConnectionError::NotActive),
        ConnectionState::Active => {}
    }
    if envelope.to_peer_did != conn.my_peer_did || envelope.from_peer_did != conn.their_peer_did {
        return Err(ConnectionError::Misaddressed);
    }
    let bytes = Envelope::signing_bytes(
        &envelope.from_peer_did,
        &envelope.to_peer_did,
        envelope.seq,
        &envelope.payload_type,
        &envelope.payload,
    );
    if !verify_sig(params, &conn.their_key, &bytes, &envelope.signature) {
        return Err(ConnectionError::BadSignature);
    }
    if envelope.seq != conn.next_recv_seq {
        return Err(ConnectionError::ReplayedOrOutOfOrder { expected: conn.next_recv_seq, got: envelope.seq });
    }
    conn.next_recv_seq += 1;
    Ok(envelope.payload.clone())
}

pub fn close(conn: &mut Connection) -> ConnectionState {
    conn.state = ConnectionState::Closed;
    conn.state
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub index: u64,
    pub timestamp: Timestamp,
    pub inbox_id: String,
    pub envelope: Envelope,
}

/// In-process transport: FIFO queue per inbox plus a log of every delivery.
#[derive(Debug, Clone, Default)]
pub struct MessageBus {
    queues: BTreeMap<String, VecDeque<Envelope>>,
    log: Vec<MessageRecord>,
}

impl MessageBus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn deliver(&mut self, inbox_id: &str, envelope: Envelope, at: Timestamp) {
        self.log.push(MessageRecord {
            index: self.log.len() as u64,
            timestamp: at,
            inbox_id: inbox_id.to_string(),
            envelope: envelope.clone(),
        });
        self.queues.entry(inbox_id.to_string()).or_default().push_back(envelope);
    }

    pub fn next(&mut self, inbox_id: &str) -> Option<Envelope> {
        self.queues.get_mut(inbox_id)?.pop_front()
    }

    pub fn pending(&self, inbox_id: &str) -> usize {
        self.queues.get(inbox_id).map_or(0, VecDeque::len)
    }

    pub fn log(&self) -> &[MessageRecord] {
        &self.log
    }

    /// JSON lines, one delivered envelope per line.
    pub fn export_jsonl(&self) -> String {
        self.log.iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect()
    }
}
