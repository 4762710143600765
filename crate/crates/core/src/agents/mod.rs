//! Stateful actors and the ecosystem they live in.
//!
//! An [`Ecosystem`] owns the registry, the audit log, the message bus, the
//! simulated clock and one seeded RNG, plus every [`Agent`]. Agents talk
//! only through envelopes on the bus; each inbound envelope is handled by
//! the receiving agent's role logic, which may reply. Flow helpers such as
//! [`Ecosystem::issue_credential`] send the first message, pump the bus
//! until it is quiet, and report what happened.

mod wallet;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use wallet::{
    ConsentPolicy, ConsentPrompt, ConsentRecord, ConsentRule, Decision, IncomingRequest, Inventory,
    InventoryConnection, InventoryCredential, StoreOutcome, Wallet, WalletError, WALLET_EXPORT_VERSION,
};

use crate::audit::{AuditLog, EventPayload, EventType};
use crate::clock::{SimClock, Timestamp};
use crate::connections::{
    self, accept_invitation, complete_invitation, create_invitation, payload_types as pt, ConnectionError,
    ConnectionResponse, Envelope, FormationMode, Invitation, InvitationBook, MessageBus,
};
use crate::credentials::{
    build_credential, check_request, make_offer, request_credential, CredentialError, CredentialOffer,
    CredentialRequest, IssueMessage, Refusal,
};
use crate::crypto::{keygen, GroupParams, KeyPair};
use crate::ids::{CredentialId, Nonce};
use crate::presentation::{
    create_presentation, create_proof_request, select_credentials, Assignment, CandidateSelection, ConsentToken,
    Presentation, PresentationError, ProofRequest, RequestedAttribute, SelectionOutcome, VerificationResult,
    VerifierBook,
};
use crate::registry::{register_did, register_schema, sign_revocation, CredentialSchema, Did, Registry, RegistryError, RevocationList};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Holder,
    Issuer,
    Verifier,
    Mixed,
}

impl Role {
    pub fn is_anchor(self) -> bool {
        self != Role::Holder
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
    #[error("agent `{0}` already exists")]
    DuplicateAgent(String),
    #[error("no active connection from `{from}` to `{to}`")]
    NoConnection { from: String, to: String },
    #[error("agent `{0}` has no registered public DID")]
    NoPublicDid(String),
    #[error("credential {0} was not issued by this agent")]
    UnknownCredential(CredentialId),
    #[error("protocol failure: {0}")]
    Protocol(String),
    #[error(transparent)]
    Connection(#[from] ConnectionError),
    #[error(transparent)]
    Credential(#[from] CredentialError),
    #[error(transparent)]
    Presentation(#[from] PresentationError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Wallet(#[from] WalletError),
}

/// Which satisfying assignment a holder uses for its next presentation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "choice", content = "index")]
pub enum SelectionChoice {
    #[default]
    Default,
    Oldest,
    Index(usize),
}

impl SelectionChoice {
    pub fn pick<'a>(&self, selection: &'a CandidateSelection, held: &[crate::credentials::HeldCredential]) -> Option<&'a Assignment> {
        match self {
            SelectionChoice::Default => Some(selection.default_assignment()),
            SelectionChoice::Index(i) => selection.assignments.get(*i),
            SelectionChoice::Oldest => selection.assignments.iter().min_by_key(|a| {
                let distinct = a.distinct();
                let mut ages: Vec<Timestamp> = distinct
                    .iter()
                    .filter_map(|id| held.iter().find(|h| h.id() == *id).map(|h| h.credential.body.issued_at))
                    .collect();
                ages.sort_unstable();
                (distinct.len(), ages)
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenOffer {
    pub offer: CredentialOffer,
    /// Values the issuer will sign; normally equal to the preview.
    pub sign_values: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuanceRecord {
    pub credential_id: CredentialId,
    pub schema_id: String,
    pub issued_at: Timestamp,
    pub revoked: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IssuerState {
    pub open_offers: BTreeMap<Nonce, OpenOffer>,
    pub issued: BTreeMap<CredentialId, IssuanceRecord>,
    pub revocation: Option<RevocationList>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationRecord {
    pub timestamp: Timestamp,
    pub request: ProofRequest,
    pub presentation: Presentation,
    pub result: VerificationResult,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct VerifierState {
    pub book: VerifierBook,
    pub results: Vec<VerificationRecord>,
}

/// Payload of a `problem-report` envelope.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemReport {
    pub thread: String,
    pub code: String,
    pub detail: String,
}

/// Payload of an `ack` envelope.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub thread: String,
    pub status: String,
}

#[derive(Debug)]
pub struct Agent {
    pub name: String,
    pub role: Role,
    keys: KeyPair,
    pub public_did: Option<Did>,
    pub inbox_id: String,
    pub wallet: Wallet,
    pub issuer: IssuerState,
    pub verifier: VerifierState,
    invitations: InvitationBook,
    pub consent_policy: ConsentPolicy,
    pub selection: SelectionChoice,
    /// Problem reports and acks received, as `(type, thread, code)`.
    pub notices: Vec<(String, String, String)>,
}

impl Agent {
    fn actor(&self, my_peer_did: &Did) -> Did {
        self.public_did.clone().unwrap_or_else(|| my_peer_did.clone())
    }

    pub fn public_key(&self) -> &crate::crypto::GroupElement {
        self.keys.public()
    }
}

/// What a handler observed; flow helpers read these back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlowEvent {
    CredentialStored { holder: String, offer_nonce: Nonce, credential_id: CredentialId },
    CredentialRefused { holder: String, offer_nonce: Nonce, reason: Refusal },
    IssueFailed { issuer: String, offer_nonce: Nonce, error: String },
    PresentationSent { holder: String, request_id: Nonce, credential_ids: Vec<CredentialId> },
    ConsentDenied { holder: String, request_id: Nonce },
    Unsatisfiable { holder: String, request_id: Nonce, missing: Vec<String> },
    Verified { verifier: String, request_id: Nonce, result: VerificationResult },
    UnknownRequest { verifier: String, nonce: Nonce },
}

/// A holder's answer to one proof request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProofAnswer {
    Presented(Presentation),
    Denied,
    Unsatisfiable(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProofOutcome {
    Verified(VerificationResult),
    ConsentDenied,
    Unsatisfiable(Vec<String>),
    NoResponse,
}

impl ProofOutcome {
    pub fn accepted(&self) -> bool {
        matches!(self, ProofOutcome::Verified(r) if r.accepted)
    }
}

pub struct Ecosystem {
    pub params: &'static GroupParams,
    pub registry: Registry,
    pub audit: AuditLog,
    pub bus: MessageBus,
    pub clock: SimClock,
    rng: ChaCha20Rng,
    agents: Vec<Agent>,
    events: Vec<FlowEvent>,
}

impl Ecosystem {
    pub fn new(params: &'static GroupParams, seed: u64) -> Self {
        Self::with_clock(params, seed, SimClock::default())
    }

    pub fn with_clock(params: &'static GroupParams, seed: u64, clock: SimClock) -> Self {
        Ecosystem {
            params,
            registry: Registry::new(params),
            audit: AuditLog::new(),
            bus: MessageBus::new(),
            clock,
            rng: ChaCha20Rng::seed_from_u64(seed),
            agents: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn events(&self) -> &[FlowEvent] {
        &self.events
    }

    fn index(&self, name: &str) -> Result<usize, AgentError> {
        self.agents.iter().position(|a| a.name == name).ok_or_else(|| AgentError::UnknownAgent(name.to_string()))
    }

    pub fn agent(&self, name: &str) -> Result<&Agent, AgentError> {
        Ok(&self.agents[self.index(name)?])
    }

    pub fn agent_mut(&mut self, name: &str) -> Result<&mut Agent, AgentError> {
        let i = self.index(name)?;
        Ok(&mut self.agents[i])
    }

    fn new_agent(&mut self, name: &str, role: Role) -> Result<usize, AgentError> {
        if self.index(name).is_ok() {
            return Err(AgentError::DuplicateAgent(name.to_string()));
        }
        // Small groups have few keys; never reuse one already on the registry.
        let mut keys = keygen(self.params, &mut self.rng);
        while self.registry.resolve(&Did::from_key(keys.public())).is_ok() {
            keys = keygen(self.params, &mut self.rng);
        }
        let wallet = Wallet::new(self.params, &mut self.rng);
        let inbox_id = format!("inbox:{}", name.to_lowercase().replace(' ', "-"));
        self.agents.push(Agent {
            name: name.to_string(),
            role,
            keys,
            public_did: None,
            inbox_id,
            wallet,
            issuer: IssuerState::default(),
            verifier: VerifierState::default(),
            invitations: InvitationBook::default(),
            consent_policy: ConsentPolicy::default(),
            selection: SelectionChoice::Default,
            notices: Vec::new(),
        });
        Ok(self.agents.len() - 1)
    }

    /// Adds a holder. Holders get no public DID.
    pub fn add_holder(&mut self, name: &str) -> Result<(), AgentError> {
        self.new_agent(name, Role::Holder).map(|_| ())
    }

    /// Adds a trust anchor and publishes its DID.
    pub fn add_anchor(&mut self, name: &str, role: Role) -> Result<Did, AgentError> {
        let i = self.new_agent(name, role)?;
        let agent = &self.agents[i];
        let did = register_did(&mut self.registry, &agent.keys, &agent.name, &agent.inbox_id, &mut self.rng)?;
        self.agents[i].public_did = Some(did.clone());
        let t = self.clock.tick();
        self.audit.append(t, &did, EventType::RegistryWrite, EventPayload::default().with_note("DidDocument"));
        Ok(did)
    }

    pub fn publish_schema(&mut self, author: &str, schema: CredentialSchema) -> Result<(), AgentError> {
        let i = self.index(author)?;
        let agent = &self.agents[i];
        let did = agent.public_did.clone().ok_or_else(|| AgentError::NoPublicDid(author.to_string()))?;
        let note = format!("CredentialSchema {}", schema.schema_id);
        register_schema(&mut self.registry, schema, &did, &agent.keys, &mut self.rng)?;
        let t = self.clock.tick();
        self.audit.append(t, &did, EventType::RegistryWrite, EventPayload::default().with_note(note));
        Ok(())
    }

    /// Inviter side of connection formation. With `as_public` the
    /// invitation is signed by the inviter's registered DID key.
    pub fn create_invitation(&mut self, inviter: &str, as_public: bool, mode: FormationMode) -> Result<Invitation, AgentError> {
        let i = self.index(inviter)?;
        let agent = &self.agents[i];
        let anchor = if as_public {
            let did = agent.public_did.as_ref().ok_or_else(|| AgentError::NoPublicDid(inviter.to_string()))?;
            if self.registry.resolve(did).is_err() {
                return Err(AgentError::NoPublicDid(inviter.to_string()));
            }
            Some((did, &agent.keys))
        } else {
            None
        };
        let pending = loop {
            let p = create_invitation(self.params, &agent.inbox_id, &agent.name, anchor, mode, &mut self.rng);
            if agent.wallet.connection(&p.invitation.peer_did).is_none() {
                break p;
            }
        };
        let invitation = pending.invitation.clone();
        self.agents[i].invitations.insert(pending);
        Ok(invitation)
    }

    /// Invitee accepts; the response goes back out of band and the inviter
    /// completes. Returns the invitee's peer DID for the new connection.
    pub fn accept_invitation(&mut self, invitee: &str, inviter: &str, invitation: &Invitation) -> Result<Did, AgentError> {
        let e = self.index(invitee)?;
        let r = self.index(inviter)?;
        let pending = self.agents[r].invitations.take(&invitation.invitation_id)?;
        let (conn, response): (_, ConnectionResponse) = loop {
            let (conn, response) = accept_invitation(
                self.params,
                &self.registry,
                invitation,
                &self.agents[e].inbox_id,
                &self.agents[e].name,
                &mut self.rng,
            )?;
            if self.agents[e].wallet.connection(&conn.my_peer_did).is_none() {
                break (conn, response);
            }
        };
        let inviter_conn = complete_invitation(self.params, pending, &response)?;
        let actor = self.agents[r].actor(&inviter_conn.my_peer_did);
        let note = format!("{:?}", inviter_conn.mode);
        let peer = conn.my_peer_did.clone();
        self.agents[r].wallet.connections.push(inviter_conn);
        self.agents[e].wallet.connections.push(conn);
        let t = self.clock.tick();
        self.audit.append(t, &actor, EventType::ConnectionEstablished, EventPayload::default().with_note(note));
        Ok(peer)
    }

    /// Full connection formation; anchors always sign their invitations.
    pub fn connect(&mut self, inviter: &str, invitee: &str, mode: FormationMode) -> Result<Did, AgentError> {
        let as_public = self.agent(inviter)?.public_did.is_some();
        let invitation = self.create_invitation(inviter, as_public, mode)?;
        self.accept_invitation(invitee, inviter, &invitation)
    }

    /// Closes the newest active connection between two agents, both sides.
    pub fn close_connection(&mut self, a: &str, b: &str) -> Result<(), AgentError> {
        let i = self.index(a)?;
        let j = self.index(b)?;
        let conn = self.agents[i]
            .wallet
            .connection_with(b)
            .ok_or_else(|| AgentError::NoConnection { from: a.into(), to: b.into() })?;
        let (mine, theirs) = (conn.my_peer_did.clone(), conn.their_peer_did.clone());
        if let Some(c) = self.agents[i].wallet.connection_mut(&mine) {
            connections::close(c);
        }
        if let Some(c) = self.agents[j].wallet.connection_mut(&theirs) {
            connections::close(c);
        }
        Ok(())
    }

    fn conn_to(&self, from: usize, to: &str) -> Result<Did, AgentError> {
        self.agents[from]
            .wallet
            .connection_with(to)
            .map(|c| c.my_peer_did.clone())
            .ok_or_else(|| AgentError::NoConnection { from: self.agents[from].name.clone(), to: to.to_string() })
    }

    fn send<T: Serialize>(&mut self, from: usize, my_peer_did: &Did, payload_type: &str, payload: &T) -> Result<(), AgentError> {
        let bytes = serde_json::to_vec(payload).expect("payload serializes");
        let conn = self.agents[from]
            .wallet
            .connection_mut(my_peer_did)
            .ok_or_else(|| AgentError::Protocol(format!("no connection {my_peer_did}")))?;
        let envelope = connections::send(self.params, conn, payload_type, bytes, &mut self.rng)?;
        let inbox = conn.their_inbox.clone();
        let t = self.clock.tick();
        self.bus.deliver(&inbox, envelope, t);
        Ok(())
    }

    fn problem(&mut self, from: usize, conn: &Did, thread: String, code: &str, detail: String) -> Result<(), AgentError> {
        self.send(from, conn, pt::PROBLEM_REPORT, &ProblemReport { thread, code: code.to_string(), detail })
    }

    /// Handles inbound envelopes for every agent until no inbox has mail.
    pub fn pump(&mut self) -> Result<(), AgentError> {
        loop {
            let mut handled = false;
            for i in 0..self.agents.len() {
                while self.handle_next(i)? {
                    handled = true;
                }
            }
            if !handled {
                return Ok(());
            }
        }
    }

    /// Handles one agent's inbox until it is empty.
    pub fn process_inbox(&mut self, name: &str) -> Result<usize, AgentError> {
        let i = self.index(name)?;
        let mut n = 0;
        while self.handle_next(i)? {
            n += 1;
        }
        Ok(n)
    }

    fn handle_next(&mut self, i: usize) -> Result<bool, AgentError> {
        let inbox = self.agents[i].inbox_id.clone();
        let Some(envelope) = self.bus.next(&inbox) else {
            return Ok(false);
        };
        self.handle(i, &envelope)?;
        Ok(true)
    }

    fn handle(&mut self, i: usize, envelope: &Envelope) -> Result<(), AgentError> {
        let conn_did = envelope.to_peer_did.clone();
        let agent = &mut self.agents[i];
        let conn = agent
            .wallet
            .connections
            .iter_mut()
            .find(|c| c.my_peer_did == conn_did)
            .ok_or_else(|| AgentError::Protocol(format!("{} has no connection {conn_did}", agent.name)))?;
        let payload = connections::receive(self.params, conn, envelope)?;
        match envelope.payload_type.as_str() {
            pt::CREDENTIAL_OFFER => self.on_offer(i, &conn_did, decode(&payload)?),
            pt::CREDENTIAL_REQUEST => self.on_request(i, &conn_did, decode(&payload)?),
            pt::CREDENTIAL_ISSUE => self.on_issue(i, &conn_did, decode(&payload)?),
            pt::PROOF_REQUEST => self.on_proof_request(i, &conn_did, decode(&payload)?),
            pt::PRESENTATION => self.on_presentation(i, &conn_did, decode(&payload)?),
            pt::ACK => {
                let ack: Ack = decode(&payload)?;
                self.agents[i].notices.push((pt::ACK.into(), ack.thread, ack.status));
                Ok(())
            }
            pt::PROBLEM_REPORT => {
                let report: ProblemReport = decode(&payload)?;
                self.agents[i].notices.push((pt::PROBLEM_REPORT.into(), report.thread, report.code));
                Ok(())
            }
            other => Err(AgentError::Protocol(format!("unhandled payload type {other}"))),
        }
    }

    fn on_offer(&mut self, i: usize, conn: &Did, offer: CredentialOffer) -> Result<(), AgentError> {
        let (request, pending) = request_credential(self.params, self.agents[i].wallet.link_secret(), &offer, &mut self.rng);
        self.agents[i].wallet.pending.insert(offer.offer_nonce, pending);
        self.send(i, conn, pt::CREDENTIAL_REQUEST, &request)
    }

    fn on_request(&mut self, i: usize, conn: &Did, request: CredentialRequest) -> Result<(), AgentError> {
        let thread = request.offer_nonce.to_hex();
        let issuer_name = self.agents[i].name.clone();
        let Some(open) = self.agents[i].issuer.open_offers.remove(&request.offer_nonce) else {
            let error = CredentialError::ProofBindingMismatch;
            self.events.push(FlowEvent::IssueFailed { issuer: issuer_name, offer_nonce: request.offer_nonce, error: error.to_string() });
            return self.problem(i, conn, thread, "proof-binding-mismatch", error.to_string());
        };
        if let Err(error) = check_request(self.params, &open.offer, &request) {
            self.events.push(FlowEvent::IssueFailed { issuer: issuer_name, offer_nonce: request.offer_nonce, error: error.to_string() });
            return self.problem(i, conn, thread, "bad-request", error.to_string());
        }
        let schema = self.registry.resolve_schema(&open.offer.schema_id)?.clone();
        let did = self.agents[i].public_did.clone().ok_or_else(|| AgentError::NoPublicDid(issuer_name.clone()))?;
        let credential_id = loop {
            let id = CredentialId::random(&mut self.rng);
            if !self.agents[i].issuer.issued.contains_key(&id) {
                break id;
            }
        };
        let issued_at = self.clock.tick();
        let credential = build_credential(
            self.params,
            &self.agents[i].keys,
            &did,
            &schema,
            &open.sign_values,
            request.link_commitment.clone(),
            credential_id,
            issued_at,
            &mut self.rng,
        )?;
        self.agents[i].issuer.issued.insert(
            credential_id,
            IssuanceRecord { credential_id, schema_id: schema.schema_id.clone(), issued_at, revoked: None },
        );
        let t = self.clock.tick();
        self.audit.append(t, &did, EventType::Issued, EventPayload::credential(credential_id).with_note(schema.schema_id));
        self.send(i, conn, pt::CREDENTIAL_ISSUE, &IssueMessage { offer_nonce: request.offer_nonce, credential })
    }

    fn on_issue(&mut self, i: usize, conn: &Did, msg: IssueMessage) -> Result<(), AgentError> {
        let holder = self.agents[i].name.clone();
        let outcome = self.agents[i].wallet.verify_and_store(self.params, &self.registry, &msg.offer_nonce, msg.credential);
        let thread = msg.offer_nonce.to_hex();
        match outcome {
            StoreOutcome::Accepted(credential_id) => {
                self.events.push(FlowEvent::CredentialStored { holder, offer_nonce: msg.offer_nonce, credential_id });
                self.send(i, conn, pt::ACK, &Ack { thread, status: "stored".into() })
            }
            StoreOutcome::Refused(reason) => {
                let detail = reason.to_string();
                self.events.push(FlowEvent::CredentialRefused { holder, offer_nonce: msg.offer_nonce, reason: reason.clone() });
                self.problem(i, conn, thread, &refusal_code(&reason), detail)
            }
        }
    }

    fn on_proof_request(&mut self, i: usize, conn: &Did, request: ProofRequest) -> Result<(), AgentError> {
        let request_id = request.request_id;
        self.agents[i].wallet.incoming.insert(request_id, IncomingRequest { request: request.clone(), connection: conn.clone() });
        let thread = request_id.to_hex();
        match self.answer(i, conn, &request)? {
            ProofAnswer::Denied => self.problem(i, conn, thread, "consent-denied", "holder declined the request".into()),
            ProofAnswer::Unsatisfiable(missing) => self.problem(i, conn, thread, "unsatisfiable", missing.join(",")),
            ProofAnswer::Presented(presentation) => self.send(i, conn, pt::PRESENTATION, &presentation),
        }
    }

    /// Consent decision, selection and presentation for one request.
    fn answer(&mut self, i: usize, conn: &Did, request: &ProofRequest) -> Result<ProofAnswer, AgentError> {
        let request_id = request.request_id;
        let (decision, rule_id) = self.agents[i].consent_policy.decide(request);
        let t = self.clock.tick();
        self.agents[i].wallet.log_consent(ConsentRecord {
            request_id,
            verifier: request.verifier.clone(),
            decision,
            timestamp: t,
            rule_id: rule_id.clone(),
        });
        let actor = self.agents[i].actor(conn);
        let holder = self.agents[i].name.clone();
        let payload = EventPayload::default().with_request(request_id);
        self.agents[i].wallet.incoming.remove(&request_id);
        if decision == Decision::Deny {
            self.audit.append(t, &actor, EventType::ConsentDenied, payload);
            self.events.push(FlowEvent::ConsentDenied { holder, request_id });
            return Ok(ProofAnswer::Denied);
        }
        let payload = match rule_id {
            Some(rule) => payload.with_note(format!("rule {rule}")),
            None => payload,
        };
        self.audit.append(t, &actor, EventType::ConsentGranted, payload);
        let token = ConsentToken::granted(request_id);
        let wallet = &self.agents[i].wallet;
        let selection = match select_credentials(&wallet.credentials, request) {
            SelectionOutcome::Candidates(c) => c,
            SelectionOutcome::Unsatisfiable { missing } => {
                self.events.push(FlowEvent::Unsatisfiable { holder, request_id, missing: missing.clone() });
                return Ok(ProofAnswer::Unsatisfiable(missing));
            }
        };
        let choice = std::mem::take(&mut self.agents[i].selection);
        let wallet = &self.agents[i].wallet;
        let assignment = choice
            .pick(&selection, &wallet.credentials)
            .ok_or_else(|| AgentError::Presentation(PresentationError::SelectionInvalid(format!("{choice:?} out of range"))))?
            .clone();
        let presentation = create_presentation(
            self.params,
            wallet.link_secret(),
            &wallet.credentials,
            request,
            &assignment,
            Some(&token),
            &mut self.rng,
        )?;
        self.events.push(FlowEvent::PresentationSent { holder, request_id, credential_ids: presentation.credential_ids() });
        Ok(ProofAnswer::Presented(presentation))
    }

    fn on_presentation(&mut self, i: usize, conn: &Did, presentation: Presentation) -> Result<(), AgentError> {
        let actor = self.agents[i].actor(conn);
        let result = match self.record_verification(i, &actor, &presentation) {
            Ok(r) => r,
            Err(AgentError::Presentation(PresentationError::UnknownRequest)) => {
                return self.problem(i, conn, presentation.request_id.to_hex(), "unknown-request", String::new());
            }
            Err(e) => return Err(e),
        };
        let thread = result.request_id.to_hex();
        let outcome = verification_outcome(&result);
        if result.accepted {
            self.send(i, conn, pt::ACK, &Ack { thread, status: outcome })
        } else {
            self.problem(i, conn, thread, "verification-failed", outcome)
        }
    }

    fn record_verification(&mut self, i: usize, actor: &Did, presentation: &Presentation) -> Result<VerificationResult, AgentError> {
        let verifier = self.agents[i].name.clone();
        let now = self.clock.now();
        let result = match self.agents[i].verifier.book.verify(self.params, &self.registry, presentation, now) {
            Ok(r) => r,
            Err(PresentationError::UnknownRequest) => {
                self.events.push(FlowEvent::UnknownRequest { verifier, nonce: presentation.nonce });
                return Err(PresentationError::UnknownRequest.into());
            }
            Err(e) => return Err(e.into()),
        };
        let request = self.agents[i].verifier.book.request(&presentation.nonce).expect("verified against it").clone();
        let t = self.clock.tick();
        let payload = EventPayload {
            credential_ids: result.credential_ids.clone(),
            request_id: Some(result.request_id),
            outcome: Some(verification_outcome(&result)),
            note: None,
        };
        self.audit.append(t, actor, EventType::Verified, payload);
        self.agents[i].verifier.results.push(VerificationRecord {
            timestamp: t,
            request: request.clone(),
            presentation: presentation.clone(),
            result: result.clone(),
        });
        self.events.push(FlowEvent::Verified { verifier, request_id: request.request_id, result: result.clone() });
        Ok(result)
    }

    /// Creates and records a proof request without sending it; the caller
    /// carries it to the holder by other means.
    pub fn prepare_proof_request(
        &mut self,
        verifier: &str,
        requested: Vec<RequestedAttribute>,
        expiry: Option<Timestamp>,
    ) -> Result<ProofRequest, AgentError> {
        let i = self.index(verifier)?;
        let did = self.agents[i].public_did.clone().ok_or_else(|| AgentError::NoPublicDid(verifier.to_string()))?;
        let now = self.clock.tick();
        let request = create_proof_request(&did, requested, now, expiry, &mut self.rng)?;
        self.agents[i].verifier.book.record(request.clone());
        Ok(request)
    }

    /// Holder answers a request that arrived out of band. The holder must
    /// have an active connection to the requesting verifier.
    pub fn answer_proof_request(&mut self, holder: &str, request: &ProofRequest) -> Result<ProofAnswer, AgentError> {
        let i = self.index(holder)?;
        let conn = self.agents[i]
            .wallet
            .connections
            .iter()
            .rev()
            .find(|c| c.is_active() && c.their_public_did.as_ref() == Some(&request.verifier))
            .map(|c| c.my_peer_did.clone())
            .ok_or_else(|| AgentError::NoConnection { from: holder.to_string(), to: request.verifier.to_string() })?;
        self.answer(i, &conn, request)
    }

    /// Verifies a presentation that arrived out of band.
    pub fn verify_presentation(&mut self, verifier: &str, presentation: &Presentation) -> Result<VerificationResult, AgentError> {
        let i = self.index(verifier)?;
        let did = self.agents[i].public_did.clone().ok_or_else(|| AgentError::NoPublicDid(verifier.to_string()))?;
        self.record_verification(i, &did, presentation)
    }

    /// Offer, blinded request, issuance and holder check in one exchange.
    pub fn issue_credential(
        &mut self,
        issuer: &str,
        holder: &str,
        schema_id: &str,
        values: &BTreeMap<String, String>,
    ) -> Result<StoreOutcome, AgentError> {
        self.issue_credential_with(issuer, holder, schema_id, values, values)
    }

    /// As [`issue_credential`](Self::issue_credential) but signs
    /// `signed_values`, which may differ from the previewed values.
    pub fn issue_credential_with(
        &mut self,
        issuer: &str,
        holder: &str,
        schema_id: &str,
        preview: &BTreeMap<String, String>,
        signed_values: &BTreeMap<String, String>,
    ) -> Result<StoreOutcome, AgentError> {
        let i = self.index(issuer)?;
        self.index(holder)?;
        let did = self.agents[i].public_did.clone().ok_or_else(|| AgentError::NoPublicDid(issuer.to_string()))?;
        let conn = self.conn_to(i, holder)?;
        let offer = make_offer(&self.registry, &did, schema_id, preview, &mut self.rng)?;
        let nonce = offer.offer_nonce;
        self.agents[i].issuer.open_offers.insert(nonce, OpenOffer { offer: offer.clone(), sign_values: signed_values.clone() });
        let mark = self.events.len();
        self.send(i, &conn, pt::CREDENTIAL_OFFER, &offer)?;
        self.pump()?;
        for event in &self.events[mark..] {
            match event {
                FlowEvent::CredentialStored { offer_nonce, credential_id, .. } if *offer_nonce == nonce => {
                    return Ok(StoreOutcome::Accepted(*credential_id));
                }
                FlowEvent::CredentialRefused { offer_nonce, reason, .. } if *offer_nonce == nonce => {
                    return Ok(StoreOutcome::Refused(reason.clone()));
                }
                FlowEvent::IssueFailed { offer_nonce, error, .. } if *offer_nonce == nonce => {
                    return Err(AgentError::Protocol(error.clone()));
                }
                _ => {}
            }
        }
        Err(AgentError::Protocol(format!("issuance of {schema_id} did not complete")))
    }

    /// Sends a proof request without processing any replies.
    pub fn send_proof_request(
        &mut self,
        verifier: &str,
        holder: &str,
        requested: Vec<RequestedAttribute>,
        expiry: Option<Timestamp>,
    ) -> Result<ProofRequest, AgentError> {
        let i = self.index(verifier)?;
        self.index(holder)?;
        let conn = self.conn_to(i, holder)?;
        let verifier_did = self.agents[i].public_did.clone().unwrap_or_else(|| conn.clone());
        let now = self.clock.tick();
        let request = create_proof_request(&verifier_did, requested, now, expiry, &mut self.rng)?;
        self.agents[i].verifier.book.record(request.clone());
        self.send(i, &conn, pt::PROOF_REQUEST, &request)?;
        Ok(request)
    }

    /// Request, consent, presentation and verification in one exchange.
    pub fn request_proof(
        &mut self,
        verifier: &str,
        holder: &str,
        requested: Vec<RequestedAttribute>,
    ) -> Result<ProofOutcome, AgentError> {
        let mark = self.events.len();
        let request = self.send_proof_request(verifier, holder, requested, None)?;
        self.pump()?;
        Ok(self.proof_outcome_since(mark, &request.request_id))
    }

    /// Outcome for `request_id` among events recorded after `mark`.
    pub fn proof_outcome_since(&self, mark: usize, request_id: &Nonce) -> ProofOutcome {
        let mut outcome = ProofOutcome::NoResponse;
        for event in &self.events[mark.min(self.events.len())..] {
            match event {
                FlowEvent::Verified { request_id: r, result, .. } if r == request_id => {
                    outcome = ProofOutcome::Verified(result.clone());
                }
                FlowEvent::ConsentDenied { request_id: r, .. } if r == request_id => outcome = ProofOutcome::ConsentDenied,
                FlowEvent::Unsatisfiable { request_id: r, missing, .. } if r == request_id => {
                    outcome = ProofOutcome::Unsatisfiable(missing.clone());
                }
                _ => {}
            }
        }
        outcome
    }

    /// Adds `credential_id` to the issuer's revocation list. Revoking an
    /// already revoked id changes nothing and returns the current version.
    pub fn revoke_credential(&mut self, issuer: &str, credential_id: CredentialId, reason: &str) -> Result<u64, AgentError> {
        let i = self.index(issuer)?;
        let did = self.agents[i].public_did.clone().ok_or_else(|| AgentError::NoPublicDid(issuer.to_string()))?;
        let record = self.agents[i].issuer.issued.get(&credential_id).ok_or(AgentError::UnknownCredential(credential_id))?;
        if record.revoked.is_some() {
            return Ok(self.agents[i].issuer.revocation.as_ref().map_or(0, |l| l.version));
        }
        let mut list = self.agents[i].issuer.revocation.clone().unwrap_or(RevocationList {
            issuer_did: did.clone(),
            revoked_ids: Default::default(),
            version: 0,
        });
        list.revoked_ids.insert(credential_id);
        list.version += 1;
        let sig = sign_revocation(self.params, &list, &self.agents[i].keys, &mut self.rng);
        self.registry.publish_revocation(list.clone(), sig)?;
        let version = list.version;
        self.agents[i].issuer.revocation = Some(list);
        if let Some(r) = self.agents[i].issuer.issued.get_mut(&credential_id) {
            r.revoked = Some(reason.to_string());
        }
        let t = self.clock.tick();
        self.audit.append(t, &did, EventType::RegistryWrite, EventPayload::default().with_note(format!("RevocationList v{version}")));
        let t = self.clock.tick();
        self.audit.append(t, &did, EventType::Revoked, EventPayload::credential(credential_id).with_note(reason));
        Ok(version)
    }

    pub fn list_all_data(&self, name: &str) -> Result<Inventory, AgentError> {
        Ok(self.agent(name)?.wallet.list_all_data())
    }

    pub fn export_wallet(&self, name: &str) -> Result<Vec<u8>, AgentError> {
        Ok(self.agent(name)?.wallet.export(self.params))
    }

    /// Replaces an agent's wallet with an imported one.
    pub fn import_wallet(&mut self, name: &str, bytes: &[u8]) -> Result<(), AgentError> {
        let wallet = Wallet::import(self.params, &self.registry, bytes)?;
        self.agent_mut(name)?.wallet = wallet;
        Ok(())
    }

    pub fn set_consent_policy(&mut self, name: &str, policy: ConsentPolicy) -> Result<(), AgentError> {
        self.agent_mut(name)?.consent_policy = policy;
        Ok(())
    }

    pub fn set_selection(&mut self, name: &str, choice: SelectionChoice) -> Result<(), AgentError> {
        self.agent_mut(name)?.selection = choice;
        Ok(())
    }
}

fn verification_outcome(result: &VerificationResult) -> String {
    if result.accepted {
        "accepted".to_string()
    } else {
        let failed: Vec<&str> = result.failed_checks().iter().map(|c| c.name()).collect();
        format!("rejected:{}", failed.join(","))
    }
}

fn decode<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, AgentError> {
    serde_json::from_slice(bytes).map_err(|e| AgentError::Protocol(format!("malformed payload: {e}")))
}

fn refusal_code(reason: &Refusal) -> String {
    let text = format!("{reason:?}");
    let head = text.split('(').next().unwrap_or(&text);
    let mut out = String::new();
    for (k, c) in head.chars().enumerate() {
        if c.is_uppercase() && k > 0 {
            out.push('-');
        }
        out.push(c.to_ascii_lowercase());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presentation::{AttributeRestriction, Check};

    fn vals(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    fn license() -> BTreeMap<String, String> {
        vals(&[("full_name", "Alex Morgan"), ("gmc_number", "7654321"), ("license_status", "full")])
    }

    fn eco() -> Ecosystem {
        let mut e = Ecosystem::new(GroupParams::production(), 7);
        e.add_anchor("GMC", Role::Issuer).unwrap();
        e.add_anchor("Edinburgh", Role::Mixed).unwrap();
        e.add_holder("Doctor").unwrap();
        e.publish_schema("GMC", CredentialSchema::new("gmc_license:1", &["full_name", "gmc_number", "license_status"]))
            .unwrap();
        e.connect("GMC", "Doctor", FormationMode::Website).unwrap();
        e.connect("Edinburgh", "Doctor", FormationMode::FaceToFace).unwrap();
        e
    }

    fn gmc_request(e: &Ecosystem) -> Vec<RequestedAttribute> {
        let gmc = e.agent("GMC").unwrap().public_did.clone().unwrap();
        vec![RequestedAttribute::new("gmc_number", AttributeRestriction::issuer(&gmc))]
    }

    #[test]
    fn issue_present_revoke() {
        let mut e = eco();
        let StoreOutcome::Accepted(id) = e.issue_credential("GMC", "Doctor", "gmc_license:1", &license()).unwrap() else {
            panic!("refused")
        };
        let inv = e.list_all_data("Doctor").unwrap();
        assert_eq!(inv.credentials.len(), 1);
        assert_eq!(inv.connections.len(), 2);

        let req = gmc_request(&e);
        assert!(e.request_proof("Edinburgh", "Doctor", req.clone()).unwrap().accepted());
        assert!(e.request_proof("Edinburgh", "Doctor", req.clone()).unwrap().accepted());

        let v1 = e.revoke_credential("GMC", id, "fraud").unwrap();
        assert_eq!(e.revoke_credential("GMC", id, "fraud").unwrap(), v1);
        let gmc_did = e.agent("GMC").unwrap().public_did.clone().unwrap();
        assert_eq!(e.registry.revocation_list(&gmc_did).unwrap().version, 1);

        let trace = e.audit.trace(&id).unwrap();
        let kinds: Vec<EventType> = trace.iter().map(|ev| ev.event_type).collect();
        assert_eq!(kinds, vec![EventType::Issued, EventType::Verified, EventType::Verified, EventType::Revoked]);

        let ProofOutcome::Verified(r) = e.request_proof("Edinburgh", "Doctor", req).unwrap() else { panic!() };
        assert_eq!(r.failed_checks(), vec![Check::Revocation]);

        assert!(matches!(
            e.revoke_credential("GMC", CredentialId([0; 16]), "x"),
            Err(AgentError::UnknownCredential(_))
        ));
    }

    #[test]
    fn misspelt_value_is_refused_atomically() {
        let mut e = eco();
        let mut wrong = license();
        wrong.insert("full_name".into(), "Alex Morgen".into());
        let out = e.issue_credential_with("GMC", "Doctor", "gmc_license:1", &license(), &wrong).unwrap();
        assert_eq!(out, StoreOutcome::Refused(Refusal::ValueMismatch("full_name".into())));
        let inv = e.list_all_data("Doctor").unwrap();
        assert!(inv.credentials.is_empty());
        assert_eq!(inv.pending_offers, 0);
        let gmc = e.agent("GMC").unwrap();
        assert!(gmc.notices.iter().any(|(t, _, code)| t == pt::PROBLEM_REPORT && code == "value-mismatch"));
    }

    #[test]
    fn consent_deny_sends_problem_report() {
        let mut e = eco();
        e.issue_credential("GMC", "Doctor", "gmc_license:1", &license()).unwrap();
        e.set_consent_policy("Doctor", ConsentPolicy::AlwaysAsk { answer: Decision::Deny }).unwrap();
        let out = e.request_proof("Edinburgh", "Doctor", gmc_request(&e)).unwrap();
        assert_eq!(out, ProofOutcome::ConsentDenied);
        let hospital = e.agent("Edinburgh").unwrap();
        assert!(hospital.verifier.results.is_empty());
        assert!(hospital.notices.iter().any(|(_, _, code)| code == "consent-denied"));
        assert_eq!(e.audit.events().last().unwrap().event_type, EventType::ConsentDenied);
    }

    #[test]
    fn invitation_rules() {
        let mut e = eco();
        assert_eq!(e.create_invitation("Doctor", true, FormationMode::Website).unwrap_err(), AgentError::NoPublicDid("Doctor".into()));
        let inv = e.create_invitation("GMC", true, FormationMode::Website).unwrap();
        e.accept_invitation("Doctor", "GMC", &inv).unwrap();
        assert_eq!(
            e.accept_invitation("Doctor", "GMC", &inv).unwrap_err(),
            AgentError::Connection(ConnectionError::InvitationReused)
        );
    }

    #[test]
    fn wallet_round_trip_presents_identically() {
        let mut e = eco();
        e.issue_credential("GMC", "Doctor", "gmc_license:1", &license()).unwrap();
        let before = e.list_all_data("Doctor").unwrap();
        let bytes = e.export_wallet("Doctor").unwrap();
        e.import_wallet("Doctor", &bytes).unwrap();
        assert_eq!(e.list_all_data("Doctor").unwrap(), before);
        assert!(e.request_proof("Edinburgh", "Doctor", gmc_request(&e)).unwrap().accepted());
        let doctor = &e.agent("Doctor").unwrap().wallet;
        assert!(doctor.self_check_link(e.params, &mut ChaCha20Rng::seed_from_u64(0)));
    }

    #[test]
    fn closed_connection_keeps_credentials_verifiable() {
        let mut e = eco();
        e.issue_credential("GMC", "Doctor", "gmc_license:1", &license()).unwrap();
        e.close_connection("GMC", "Doctor").unwrap();
        assert!(matches!(
            e.issue_credential("GMC", "Doctor", "gmc_license:1", &license()),
            Err(AgentError::NoConnection { .. })
        ));
        assert!(e.request_proof("Edinburgh", "Doctor", gmc_request(&e)).unwrap().accepted());
    }
}
