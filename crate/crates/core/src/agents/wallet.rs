//! Holder wallet: link secret, credentials, connections, consent log and
//! in-flight issuance state.

use std::collections::BTreeMap;
use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::connections::{Connection, ConnectionState, FormationMode};
use crate::credentials::{check_credential, check_issued, HeldCredential, IssuedCredential, LinkSecret, PendingRequest, Refusal};
use crate::crypto::proofs::{prove_equal_secret, verify_equal_secret};
use crate::crypto::{Commitment, GroupParams};
use crate::ids::{CredentialId, Nonce};
use crate::presentation::ProofRequest;
use crate::registry::{Did, Registry};

pub const WALLET_EXPORT_VERSION: &str = "cpx-wallet/1";
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WalletError {
    #[error("unsupported wallet export version `{0}`")]
    UnsupportedVersion(String),
    #[error("corrupt wallet export: {0}")]
    CorruptExport(String),
    #[error("export was made for group `{0}`")]
    GroupMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Allow,
    Deny,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentRecord {
    pub request_id: Nonce,
    pub verifier: Did,
    pub decision: Decision,
    pub timestamp: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_id: Option<String>,
}

/// A scripted consent rule. Unset fields match anything; set fields must
/// all match.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentRule {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verifier: Option<Did>,
    /// Matches requests with at least one attribute restricted to this issuer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restricted_issuer: Option<Did>,
    pub decision: Decision,
}

impl ConsentRule {
    pub fn matches(&self, request: &ProofRequest) -> bool {
        self.verifier.as_ref().is_none_or(|v| *v == request.verifier)
            && self.restricted_issuer.as_ref().is_none_or(|issuer| {
                request.requested.iter().any(|r| r.restriction.issuer_did.as_ref() == Some(issuer))
            })
    }
}

pub type ConsentPrompt = Box<dyn FnMut(&ProofRequest) -> Decision + Send>;

pub enum ConsentPolicy {
    /// Asks a callback each time.
    Interactive(ConsentPrompt),
    /// Batch stand-in for a prompt: the same scripted answer every time.
    AlwaysAsk { answer: Decision },
    Rules { rules: Vec<ConsentRule>, fallback: Decision },
}

impl fmt::Debug for ConsentPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConsentPolicy::Interactive(_) => f.write_str("Interactive(..)"),
            ConsentPolicy::AlwaysAsk { answer } => write!(f, "AlwaysAsk({answer:?})"),
            ConsentPolicy::Rules { rules, fallback } => {
                f.debug_struct("Rules").field("rules", rules).field("fallback", fallback).finish()
            }
        }
    }
}

impl Default for ConsentPolicy {
    fn default() -> Self {
        ConsentPolicy::AlwaysAsk { answer: Decision::Allow }
    }
}

impl ConsentPolicy {
    /// Decision plus the id of the rule that produced it, if any.
    pub fn decide(&mut self, request: &ProofRequest) -> (Decision, Option<String>) {
        match self {
            ConsentPolicy::Interactive(prompt) => (prompt(request), None),
            ConsentPolicy::AlwaysAsk { answer } => (*answer, None),
            ConsentPolicy::Rules { rules, fallback } => match rules.iter().find(|r| r.matches(request)) {
                Some(rule) => (rule.decision, Some(rule.id.clone())),
                None => (*fallback, None),
            },
        }
    }
}

/// Proof request received and awaiting a consent decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncomingRequest {
    pub request: ProofRequest,
    pub connection: Did,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StoreOutcome {
    Accepted(CredentialId),
    Refused(Refusal),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Wallet {
    link_secret: LinkSecret,
    pub credentials: Vec<HeldCredential>,
    pub connections: Vec<Connection>,
    pub consent_log: Vec<ConsentRecord>,
    /// Issuance requests in flight, keyed by offer nonce.
    pub pending: BTreeMap<Nonce, PendingRequest>,
    /// Proof requests awaiting a decision, keyed by request id.
    pub incoming: BTreeMap<Nonce, IncomingRequest>,
}

impl Wallet {
    pub fn new<R: RngCore + ?Sized>(params: &GroupParams, rng: &mut R) -> Self {
        Wallet {
            link_secret: LinkSecret::generate(params, rng),
            credentials: Vec::new(),
            connections: Vec::new(),
            consent_log: Vec::new(),
            pending: BTreeMap::new(),
            incoming: BTreeMap::new(),
        }
    }

    pub fn link_secret(&self) -> &LinkSecret {
        &self.link_secret
    }

    pub fn credential(&self, id: &CredentialId) -> Option<&HeldCredential> {
        self.credentials.iter().find(|h| h.id() == *id)
    }

    pub fn connection(&self, my_peer_did: &Did) -> Option<&Connection> {
        self.connections.iter().find(|c| c.my_peer_did == *my_peer_did)
    }

    pub fn connection_mut(&mut self, my_peer_did: &Did) -> Option<&mut Connection> {
        self.connections.iter_mut().find(|c| c.my_peer_did == *my_peer_did)
    }

    /// Most recent active connection whose counterparty carries `label`.
    pub fn connection_with(&self, label: &str) -> Option<&Connection> {
        self.connections.iter().rev().find(|c| c.their_label == label && c.state == ConnectionState::Active)
    }

    /// Checks an issued credential against the pending request and stores
    /// it. Refusal leaves no partial record: the pending entry is dropped
    /// and nothing is stored.
    pub fn verify_and_store(
        &mut self,
        params: &GroupParams,
        registry: &Registry,
        offer_nonce: &Nonce,
        cred: IssuedCredential,
    ) -> StoreOutcome {
        let Some(pending) = self.pending.remove(offer_nonce) else {
            return StoreOutcome::Refused(Refusal::UnsolicitedCredential);
        };
        if let Err(reason) = check_issued(params, registry, &pending, &cred) {
            return StoreOutcome::Refused(reason);
        }
        if self.credential(&cred.id()).is_some() {
            return StoreOutcome::Refused(Refusal::DuplicateCredential);
        }
        let id = cred.id();
        self.credentials.push(HeldCredential { credential: cred, blinding: pending.blinding });
        StoreOutcome::Accepted(id)
    }

    pub fn log_consent(&mut self, record: ConsentRecord) {
        self.consent_log.push(record);
    }

    pub fn allowed(&self, request_id: &Nonce) -> Option<&ConsentRecord> {
        self.consent_log.iter().find(|c| c.request_id == *request_id && c.decision == Decision::Allow)
    }

    pub fn list_all_data(&self) -> Inventory {
        Inventory {
            credentials: self
                .credentials
                .iter()
                .map(|h| InventoryCredential {
                    credential_id: h.id(),
                    schema_id: h.credential.body.schema_id.clone(),
                    issuer_did: h.credential.body.issuer_did.clone(),
                    issued_at: h.credential.body.issued_at,
                    values: h.credential.values.clone(),
                })
                .collect(),
            connections: self
                .connections
                .iter()
                .map(|c| InventoryConnection {
                    my_peer_did: c.my_peer_did.clone(),
                    their_peer_did: c.their_peer_did.clone(),
                    their_label: c.their_label.clone(),
                    their_public_did: c.their_public_did.clone(),
                    state: c.state,
                    mode: c.mode,
                })
                .collect(),
            consent_log: self.consent_log.clone(),
            pending_offers: self.pending.len(),
            pending_requests: self.incoming.len(),
        }
    }

    /// The wallet's own check that all its credentials commit to one secret.
    pub fn self_check_link<R: RngCore + ?Sized>(&self, params: &GroupParams, rng: &mut R) -> bool {
        if self.credentials.is_empty() {
            return true;
        }
        let commitments: Vec<Commitment> =
            self.credentials.iter().map(|h| h.credential.body.link_commitment.clone()).collect();
        let blindings: Vec<_> = self.credentials.iter().map(|h| h.blinding.clone()).collect();
        match prove_equal_secret(params, &commitments, self.link_secret.scalar(), &blindings, b"wallet-self-check", rng) {
            Ok(proof) => verify_equal_secret(params, &commitments, &proof, b"wallet-self-check"),
            Err(_) => false,
        }
    }

    /// Versioned JSON followed by a raw SHA-256 trailer over the JSON.
    pub fn export(&self, params: &GroupParams) -> Vec<u8> {
        let doc = WalletExport { version: WALLET_EXPORT_VERSION.to_string(), group_id: params.group_id().to_string(), wallet: self.clone() };
        let mut bytes = serde_json::to_vec(&doc).expect("wallet serializes");
        let checksum = Sha256::digest(&bytes);
        bytes.extend_from_slice(&checksum);
        bytes
    }

    /// Reads an export and re-checks every credential against the registry.
    pub fn import(params: &GroupParams, registry: &Registry, bytes: &[u8]) -> Result<Wallet, WalletError> {
        if bytes.len() < CHECKSUM_LEN {
            return Err(WalletError::CorruptExport("file shorter than checksum".into()));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
        if Sha256::digest(body).as_slice() != trailer {
            return Err(WalletError::CorruptExport("checksum mismatch".into()));
        }
        let header: ExportHeader =
            serde_json::from_slice(body).map_err(|e| WalletError::CorruptExport(e.to_string()))?;
        if header.version != WALLET_EXPORT_VERSION {
            return Err(WalletError::UnsupportedVersion(header.version));
        }
        let doc: WalletExport = serde_json::from_slice(body).map_err(|e| WalletError::CorruptExport(e.to_string()))?;
        if doc.group_id != params.group_id() {
            return Err(WalletError::GroupMismatch(doc.group_id));
        }
        for h in &doc.wallet.credentials {
            check_credential(params, registry, &h.credential)
                .map_err(|r| WalletError::CorruptExport(format!("credential {}: {r}", h.id())))?;
            if !h.credential.body.link_commitment.opens_to(params, doc.wallet.link_secret.scalar(), &h.blinding) {
                return Err(WalletError::CorruptExport(format!("credential {}: link commitment", h.id())));
            }
        }
        Ok(doc.wallet)
    }
}

#[derive(Serialize, Deserialize)]
struct WalletExport {
    version: String,
    group_id: String,
    wallet: Wallet,
}

#[derive(Deserialize)]
struct ExportHeader {
    version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InventoryCredential {
    pub credential_id: CredentialId,
    pub schema_id: String,
    pub issuer_did: Did,
    pub issued_at: Timestamp,
    pub values: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InventoryConnection {
    pub my_peer_did: Did,
    pub their_peer_did: Did,
    pub their_label: String,
    pub their_public_did: Option<Did>,
    pub state: ConnectionState,
    pub mode: FormationMode,
}

/// Everything the wallet holds, nothing withheld.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inventory {
    pub credentials: Vec<InventoryCredential>,
    pub connections: Vec<InventoryConnection>,
    pub consent_log: Vec<ConsentRecord>,
    pub pending_offers: usize,
    pub pending_requests: usize,
}

impl Inventory {
    pub fn is_empty(&self) -> bool {
        self.credentials.is_empty()
            && self.connections.is_empty()
            && self.consent_log.is_empty()
            && self.pending_offers == 0
            && self.pending_requests == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn empty_wallet_has_empty_inventory() {
        let params = GroupParams::toy();
        let w = Wallet::new(params, &mut ChaCha20Rng::seed_from_u64(1));
        assert!(w.list_all_data().is_empty());
    }

    #[test]
    fn export_checksum_and_version() {
        let params = GroupParams::toy();
        let registry = Registry::new(params);
        let w = Wallet::new(params, &mut ChaCha20Rng::seed_from_u64(2));
        let bytes = w.export(params);
        let back = Wallet::import(params, &registry, &bytes).unwrap();
        assert_eq!(back.list_all_data(), w.list_all_data());
        assert_eq!(back.link_secret(), w.link_secret());

        let mut flipped = bytes.clone();
        flipped[10] ^= 1;
        assert!(matches!(Wallet::import(params, &registry, &flipped), Err(WalletError::CorruptExport(_))));

        let json = &bytes[..bytes.len() - CHECKSUM_LEN];
        let text = String::from_utf8(json.to_vec()).unwrap().replace(WALLET_EXPORT_VERSION, "cpx-wallet/9");
        let mut other = text.into_bytes();
        let sum = Sha256::digest(&other);
        other.extend_from_slice(&sum);
        assert_eq!(
            Wallet::import(params, &registry, &other).unwrap_err(),
            WalletError::UnsupportedVersion("cpx-wallet/9".into())
        );
    }

    #[test]
    fn rules_report_matching_rule_id() {
        let gmc = Did::new("did:cpx:gmc");
        let mut policy = ConsentPolicy::Rules {
            rules: vec![ConsentRule {
                id: "auto-allow-gmc".into(),
                verifier: None,
                restricted_issuer: Some(gmc.clone()),
                decision: Decision::Allow,
            }],
            fallback: Decision::Deny,
        };
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let request = crate::presentation::create_proof_request(
            &Did::new("did:cpx:hospital"),
            vec![crate::presentation::RequestedAttribute::new(
                "gmc_number",
                crate::presentation::AttributeRestriction::issuer(&gmc),
            )],
            Timestamp::from_unix(0),
            None,
            &mut rng,
        )
        .unwrap();
        assert_eq!(policy.decide(&request), (Decision::Allow, Some("auto-allow-gmc".into())));
        let mut plain = request.clone();
        plain.requested[0].restriction = Default::default();
        assert_eq!(policy.decide(&plain), (Decision::Deny, None));
    }
}
