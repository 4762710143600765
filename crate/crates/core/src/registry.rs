//! Simulated verifiable data registry: an in-process, append-only log of
//! public DID documents, credential schemas and revocation lists.
//!
//! Every entry is signed by its author. A DID document is self-signed by the
//! key it publishes; schemas and revocation lists are signed by the key of an
//! already-registered author. Nothing is ever updated or removed.
//!
//! The registry is a plain value; wrap it in a `RwLock` to share it between
//! threads (one writer, many readers).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use data_encoding::BASE32_NOPAD;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::digest::hash;
use crate::crypto::{sign, verify_sig, GroupElement, GroupParams, KeyPair, SchnorrSignature};
use crate::encoding::{list_of, text_list, Canonical, MapBuilder, Value};
use crate::ids::CredentialId;

pub const DID_PREFIX: &str = "did:cpx:";
pub const PEER_DID_PREFIX: &str = "did:cpx:peer:";

const ENTRY_DOMAIN: &str = "cpx/registry-entry";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("DID {0} is already registered")]
    DuplicateDid(Did),
    #[error("schema {0} is already published")]
    DuplicateSchema(String),
    #[error("author {0} is not registered")]
    UnknownAuthor(Did),
    #[error("signature does not verify under the author's key")]
    BadSignature,
    #[error("{0} not found")]
    NotFound(String),
    #[error("revocation list version {got} does not follow {previous}")]
    StaleVersion { previous: u64, got: u64 },
    #[error("revocation list drops previously revoked ids")]
    ShrinkingSet,
    #[error("invalid entry: {0}")]
    Validation(String),
    #[error("registry import failed: {0}")]
    Import(String),
}

/// Public decentralized identifier, `did:cpx:<base32(sha256(key))>`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Did(String);

impl Did {
    pub fn from_key(key: &GroupElement) -> Did {
        Did(format!("{DID_PREFIX}{}", key_fingerprint(key)))
    }

    /// Wraps arbitrary text; use [`Did::from_key`] to derive one.
    pub fn new(text: impl Into<String>) -> Did {
        Did(text.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_peer(&self) -> bool {
        self.0.starts_with(PEER_DID_PREFIX)
    }
}

impl fmt::Debug for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Did({})", self.0)
    }
}

impl fmt::Display for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Lower-case unpadded base-32 of the key digest.
pub fn key_fingerprint(key: &GroupElement) -> String {
    BASE32_NOPAD.encode(&hash(&key.to_bytes())).to_ascii_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DidDocument {
    pub did: Did,
    pub verification_key: GroupElement,
    pub label: String,
    pub inbox_id: String,
}

impl DidDocument {
    pub fn for_key(key: &GroupElement, label: impl Into<String>, inbox_id: impl Into<String>) -> Self {
        DidDocument { did: Did::from_key(key), verification_key: key.clone(), label: label.into(), inbox_id: inbox_id.into() }
    }

    fn to_value(&self) -> Value {
        MapBuilder::new()
            .text("did", self.did.as_str())
            .field("verification_key", self.verification_key.to_value())
            .text("label", &self.label)
            .text("inbox_id", &self.inbox_id)
            .build()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialSchema {
    pub schema_id: String,
    pub attribute_names: Vec<String>,
}

impl CredentialSchema {
    pub fn new(schema_id: impl Into<String>, attribute_names: &[&str]) -> Self {
        CredentialSchema {
            schema_id: schema_id.into(),
            attribute_names: attribute_names.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), RegistryError> {
        let (name, version) = self
            .schema_id
            .split_once(':')
            .ok_or_else(|| RegistryError::Validation(format!("schema id `{}` is not name:version", self.schema_id)))?;
        if name.is_empty() || version.is_empty() {
            return Err(RegistryError::Validation(format!("schema id `{}` is not name:version", self.schema_id)));
        }
        if self.attribute_names.is_empty() {
            return Err(RegistryError::Validation("schema has no attributes".into()));
        }
        let mut seen = BTreeSet::new();
        for n in &self.attribute_names {
            if n.is_empty() {
                return Err(RegistryError::Validation("empty attribute name".into()));
            }
            if !seen.insert(n) {
                return Err(RegistryError::Validation(format!("duplicate attribute `{n}`")));
            }
        }
        Ok(())
    }

    pub fn position(&self, attribute: &str) -> Option<usize> {
        self.attribute_names.iter().position(|n| n == attribute)
    }

    fn to_value(&self) -> Value {
        MapBuilder::new()
            .text("schema_id", &self.schema_id)
            .field("attribute_names", text_list(&self.attribute_names))
            .build()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevocationList {
    pub issuer_did: Did,
    pub revoked_ids: BTreeSet<CredentialId>,
    pub version: u64,
}

impl RevocationList {
    fn to_value(&self) -> Value {
        let ids: Vec<CredentialId> = self.revoked_ids.iter().copied().collect();
        MapBuilder::new()
            .text("issuer_did", self.issuer_did.as_str())
            .field("revoked_ids", list_of(&ids))
            .uint("version", self.version)
            .build()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EntryPayload {
    DidDocument(DidDocument),
    CredentialSchema(CredentialSchema),
    RevocationList(RevocationList),
}

impl EntryPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            EntryPayload::DidDocument(_) => "DidDocument",
            EntryPayload::CredentialSchema(_) => "CredentialSchema",
            EntryPayload::RevocationList(_) => "RevocationList",
        }
    }

    /// Bytes covered by the author signature.
    pub fn signing_bytes(&self, author: &Did) -> Vec<u8> {
        let payload = match self {
            EntryPayload::DidDocument(d) => d.to_value(),
            EntryPayload::CredentialSchema(s) => s.to_value(),
            EntryPayload::RevocationList(r) => r.to_value(),
        };
        MapBuilder::new()
            .text("domain", ENTRY_DOMAIN)
            .text("kind", self.kind())
            .text("author", author.as_str())
            .field("payload", payload)
            .build()
            .encode()
    }

    pub fn sign<R: RngCore + ?Sized>(
        &self,
        params: &GroupParams,
        author: &Did,
        keypair: &KeyPair,
        rng: &mut R,
    ) -> SchnorrSignature {
        sign(params, keypair, &self.signing_bytes(author), rng)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub sequence_number: u64,
    #[serde(flatten)]
    pub payload: EntryPayload,
    pub author_did: Did,
    pub author_signature: SchnorrSignature,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RegistrySnapshot {
    group_id: String,
    entries: Vec<RegistryEntry>,
}

#[derive(Debug, Clone)]
pub struct Registry {
    params: &'static GroupParams,
    entries: Vec<RegistryEntry>,
    dids: BTreeMap<Did, usize>,
    schemas: BTreeMap<String, usize>,
    revocations: BTreeMap<Did, usize>,
}

impl Registry {
    pub fn new(params: &'static GroupParams) -> Self {
        Registry {
            params,
            entries: Vec::new(),
            dids: BTreeMap::new(),
            schemas: BTreeMap::new(),
            revocations: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> &'static GroupParams {
        self.params
    }

    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn append(&mut self, payload: EntryPayload, author_did: Did, author_signature: SchnorrSignature) -> u64 {
        let sequence_number = self.entries.len() as u64;
        let idx = self.entries.len();
        match &payload {
            EntryPayload::DidDocument(d) => {
                self.dids.insert(d.did.clone(), idx);
            }
            EntryPayload::CredentialSchema(s) => {
                self.schemas.insert(s.schema_id.clone(), idx);
            }
            EntryPayload::RevocationList(r) => {
                self.revocations.insert(r.issuer_did.clone(), idx);
            }
        }
        self.entries.push(RegistryEntry { sequence_number, payload, author_did, author_signature });
        sequence_number
    }

    fn check_author(&self, author: &Did, payload: &EntryPayload, sig: &SchnorrSignature) -> Result<(), RegistryError> {
        let doc = self.resolve(author).map_err(|_| RegistryError::UnknownAuthor(author.clone()))?;
        if verify_sig(self.params, &doc.verification_key, &payload.signing_bytes(author), sig) {
            Ok(())
        } else {
            Err(RegistryError::BadSignature)
        }
    }

    pub fn publish_did(&mut self, doc: DidDocument, self_signature: SchnorrSignature) -> Result<u64, RegistryError> {
        if doc.did.is_peer() {
            return Err(RegistryError::Validation("peer DIDs are never published".into()));
        }
        if !self.params.contains(&doc.verification_key) {
            return Err(RegistryError::Validation("verification key is not a group element".into()));
        }
        if Did::from_key(&doc.verification_key) != doc.did {
            return Err(RegistryError::Validation("DID does not match its verification key".into()));
        }
        if self.dids.contains_key(&doc.did) {
            return Err(RegistryError::DuplicateDid(doc.did));
        }
        let author = doc.did.clone();
        let payload = EntryPayload::DidDocument(doc);
        let key = match &payload {
            EntryPayload::DidDocument(d) => &d.verification_key,
            _ => unreachable!(),
        };
        if !verify_sig(self.params, key, &payload.signing_bytes(&author), &self_signature) {
            return Err(RegistryError::BadSignature);
        }
        Ok(self.append(payload, author, self_signature))
    }

    pub fn resolve(&self, did: &Did) -> Result<&DidDocument, RegistryError> {
        match self.dids.get(did).map(|&i| &self.entries[i].payload) {
            Some(EntryPayload::DidDocument(d)) => Ok(d),
            _ => Err(RegistryError::NotFound(did.to_string())),
        }
    }

    pub fn publish_schema(
        &mut self,
        schema: CredentialSchema,
        author_did: &Did,
        signature: SchnorrSignature,
    ) -> Result<u64, RegistryError> {
        schema.validate()?;
        if !self.dids.contains_key(author_did) {
            return Err(RegistryError::UnknownAuthor(author_did.clone()));
        }
        if self.schemas.contains_key(&schema.schema_id) {
            return Err(RegistryError::DuplicateSchema(schema.schema_id));
        }
        let payload = EntryPayload::CredentialSchema(schema);
        self.check_author(author_did, &payload, &signature)?;
        Ok(self.append(payload, author_did.clone(), signature))
    }

    pub fn resolve_schema(&self, schema_id: &str) -> Result<&CredentialSchema, RegistryError> {
        match self.schemas.get(schema_id).map(|&i| &self.entries[i].payload) {
            Some(EntryPayload::CredentialSchema(s)) => Ok(s),
            _ => Err(RegistryError::NotFound(format!("schema {schema_id}"))),
        }
    }

    /// DID of the author who published `schema_id`.
    pub fn schema_author(&self, schema_id: &str) -> Option<&Did> {
        self.schemas.get(schema_id).map(|&i| &self.entries[i].author_did)
    }

    pub fn publish_revocation(&mut self, list: RevocationList, signature: SchnorrSignature) -> Result<u64, RegistryError> {
        let issuer = list.issuer_did.clone();
        if !self.dids.contains_key(&issuer) {
            return Err(RegistryError::UnknownAuthor(issuer));
        }
        let previous = self.revocation_list(&issuer);
        let previous_version = previous.map_or(0, |p| p.version);
        if list.version != previous_version + 1 {
            return Err(RegistryError::StaleVersion { previous: previous_version, got: list.version });
        }
        if let Some(prev) = previous {
            if !prev.revoked_ids.is_subset(&list.revoked_ids) {
                return Err(RegistryError::ShrinkingSet);
            }
        }
        let payload = EntryPayload::RevocationList(list);
        self.check_author(&issuer, &payload, &signature)?;
        Ok(self.append(payload, issuer, signature))
    }

    pub fn revocation_list(&self, issuer: &Did) -> Option<&RevocationList> {
        match self.revocations.get(issuer).map(|&i| &self.entries[i].payload) {
            Some(EntryPayload::RevocationList(r)) => Some(r),
            _ => None,
        }
    }

    pub fn is_revoked(&self, issuer: &Did, credential_id: &CredentialId) -> bool {
        self.revocation_list(issuer).is_some_and(|r| r.revoked_ids.contains(credential_id))
    }

    /// Canonical JSON snapshot: the entries in sequence order.
    pub fn export_json(&self) -> String {
        let snapshot = RegistrySnapshot { group_id: self.params.group_id().to_string(), entries: self.entries.clone() };
        serde_json::to_string_pretty(&snapshot).expect("registry serializes")
    }

    /// Rebuilds a registry by replaying every entry through the publish checks.
    pub fn import_json(json: &str) -> Result<Registry, RegistryError> {
        let snapshot: RegistrySnapshot =
            serde_json::from_str(json).map_err(|e| RegistryError::Import(e.to_string()))?;
        let params = GroupParams::by_id(&snapshot.group_id)
            .ok_or_else(|| RegistryError::Import(format!("unknown group `{}`", snapshot.group_id)))?;
        Self::from_entries(params, snapshot.entries)
    }

    pub fn from_entries(params: &'static GroupParams, entries: Vec<RegistryEntry>) -> Result<Registry, RegistryError> {
        let mut registry = Registry::new(params);
        for (i, entry) in entries.into_iter().enumerate() {
            if entry.sequence_number != i as u64 {
                return Err(RegistryError::Import(format!("entry {i} has sequence number {}", entry.sequence_number)));
            }
            match entry.payload {
                EntryPayload::DidDocument(doc) => {
                    if doc.did != entry.author_did {
                        return Err(RegistryError::Import(format!("entry {i}: DID document not self-authored")));
                    }
                    registry.publish_did(doc, entry.author_signature)?;
                }
                EntryPayload::CredentialSchema(schema) => {
                    registry.publish_schema(schema, &entry.author_did, entry.author_signature)?;
                }
                EntryPayload::RevocationList(list) => {
                    if list.issuer_did != entry.author_did {
                        return Err(RegistryError::Import(format!("entry {i}: revocation list not issuer-authored")));
                    }
                    registry.publish_revocation(list, entry.author_signature)?;
                }
            }
        }
        Ok(registry)
    }
}

/// Convenience for publishers: derives, signs and publishes a DID document.
pub fn register_did<R: RngCore + ?Sized>(
    registry: &mut Registry,
    keypair: &KeyPair,
    label: &str,
    inbox_id: &str,
    rng: &mut R,
) -> Result<Did, RegistryError> {
    let doc = DidDocument::for_key(keypair.public(), label, inbox_id);
    let did = doc.did.clone();
    let sig = EntryPayload::DidDocument(doc.clone()).sign(registry.params(), &did, keypair, rng);
    registry.publish_did(doc, sig)?;
    Ok(did)
}

pub fn register_schema<R: RngCore + ?Sized>(
    registry: &mut Registry,
    schema: CredentialSchema,
    author: &Did,
    keypair: &KeyPair,
    rng: &mut R,
) -> Result<u64, RegistryError> {
    let sig = EntryPayload::CredentialSchema(schema.clone()).sign(registry.params(), author, keypair, rng);
    registry.publish_schema(schema, author, sig)
}

pub fn sign_revocation<R: RngCore + ?Sized>(
    params: &GroupParams,
    list: &RevocationList,
    keypair: &KeyPair,
    rng: &mut R,
) -> SchnorrSignature {
    EntryPayload::RevocationList(list.clone()).sign(params, &list.issuer_did, keypair, rng)
}
