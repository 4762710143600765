//! Proof requests and presentations.
//!
//! A presentation draws attributes from one or more held credentials. For
//! each source it carries the signed body and, for requested attributes
//! only, the `(name, value, salt)` triple that reopens the digest. An
//! equal-secret proof over all source link commitments, bound to the
//! request nonce, shows the sources belong to one holder and that the holder
//! is present now.
//!
//! Verification is [`evaluate`], a pure function of the request, the
//! presentation, the registry and whether the nonce is still fresh.
//! [`VerifierBook`] adds the one-time nonce table around it.

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::crypto::digest::{attribute_digest, Salt, SALT_LEN};
use crate::crypto::proofs::{prove_equal_secret, verify_equal_secret, KnowledgeProof, ProofError};
use crate::crypto::{verify_sig, Commitment, GroupParams, SchnorrSignature};
use crate::credentials::{CredentialBody, HeldCredential, LinkSecret};
use crate::encoding::{list_of, Canonical, DecodeError, MapBuilder, MapReader, Value};
use crate::ids::{CredentialId, Nonce};
use crate::registry::{Did, Registry};

pub const DEFAULT_EXPIRY_SECONDS: i64 = 24 * 3600;
const LINK_CONTEXT_DOMAIN: &str = "cpx/presentation-link";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PresentationError {
    #[error("proof request names no attributes")]
    EmptyRequest,
    #[error("attribute `{0}` requested twice")]
    DuplicateAttribute(String),
    #[error("no consent recorded for this request")]
    ConsentMissing,
    #[error("selection does not satisfy the request: {0}")]
    SelectionInvalid(String),
    #[error("nonce was never issued by this verifier")]
    UnknownRequest,
    #[error(transparent)]
    Proof(#[from] ProofError),
}

/// Conjunctive constraints on the credential an attribute may come from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeRestriction {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub issuer_did: Option<Did>,
}

impl AttributeRestriction {
    pub fn any() -> Self {
        Self::default()
    }

    pub fn issuer(did: &Did) -> Self {
        AttributeRestriction { schema_id: None, issuer_did: Some(did.clone()) }
    }

    pub fn schema(schema_id: &str) -> Self {
        AttributeRestriction { schema_id: Some(schema_id.to_string()), issuer_did: None }
    }

    pub fn with_issuer(mut self, did: &Did) -> Self {
        self.issuer_did = Some(did.clone());
        self
    }

    pub fn admits(&self, body: &CredentialBody) -> bool {
        self.schema_id.as_ref().is_none_or(|s| *s == body.schema_id)
            && self.issuer_did.as_ref().is_none_or(|d| *d == body.issuer_did)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestedAttribute {
    pub name: String,
    #[serde(default)]
    pub restriction: AttributeRestriction,
}

impl RequestedAttribute {
    pub fn new(name: &str, restriction: AttributeRestriction) -> Self {
        RequestedAttribute { name: name.to_string(), restriction }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofRequest {
    pub request_id: Nonce,
    /// Verifier's public DID, or its peer DID when it has none.
    pub verifier: Did,
    pub nonce: Nonce,
    pub requested: Vec<RequestedAttribute>,
    pub created_at: Timestamp,
    pub expiry: Option<Timestamp>,
}

impl ProofRequest {
    pub fn names(&self) -> BTreeSet<&str> {
        self.requested.iter().map(|r| r.name.as_str()).collect()
    }

    /// Bytes the link proof is bound to.
    pub fn link_context(&self) -> Vec<u8> {
        link_context(&self.request_id, &self.nonce)
    }
}

fn link_context(request_id: &Nonce, nonce: &Nonce) -> Vec<u8> {
    MapBuilder::new()
        .text("domain", LINK_CONTEXT_DOMAIN)
        .field("request_id", request_id.to_value())
        .field("nonce", nonce.to_value())
        .build()
        .encode()
}

/// `expiry` defaults to 24 hours after `now`.
pub fn create_proof_request<R: RngCore + ?Sized>(
    verifier: &Did,
    requested: Vec<RequestedAttribute>,
    now: Timestamp,
    expiry: Option<Timestamp>,
    rng: &mut R,
) -> Result<ProofRequest, PresentationError> {
    if requested.is_empty() {
        return Err(PresentationError::EmptyRequest);
    }
    let mut seen = BTreeSet::new();
    for r in &requested {
        if !seen.insert(r.name.as_str()) {
            return Err(PresentationError::DuplicateAttribute(r.name.clone()));
        }
    }
    Ok(ProofRequest {
        request_id: Nonce::random(rng),
        verifier: verifier.clone(),
        nonce: Nonce::random(rng),
        requested,
        created_at: now,
        expiry: Some(expiry.unwrap_or(now.plus_seconds(DEFAULT_EXPIRY_SECONDS))),
    })
}

/// One credential per requested attribute, aligned with `request.requested`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub picks: Vec<CredentialId>,
}

impl Assignment {
    pub fn distinct(&self) -> Vec<CredentialId> {
        let mut out = Vec::new();
        for id in &self.picks {
            if !out.contains(id) {
                out.push(*id);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSelection {
    pub assignments: Vec<Assignment>,
    pub default_index: usize,
}

impl CandidateSelection {
    pub fn default_assignment(&self) -> &Assignment {
        &self.assignments[self.default_index]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SelectionOutcome {
    Candidates(CandidateSelection),
    Unsatisfiable { missing: Vec<String> },
}

impl SelectionOutcome {
    pub fn candidates(self) -> Option<CandidateSelection> {
        match self {
            SelectionOutcome::Candidates(c) => Some(c),
            SelectionOutcome::Unsatisfiable { .. } => None,
        }
    }
}

/// Enumerates every satisfying assignment. The default uses the fewest
/// distinct credentials, then prefers newer ones.
pub fn select_credentials(held: &[HeldCredential], request: &ProofRequest) -> SelectionOutcome {
    let options: Vec<Vec<&HeldCredential>> = request
        .requested
        .iter()
        .map(|r| {
            held.iter()
                .filter(|h| h.credential.values.contains_key(&r.name) && r.restriction.admits(&h.credential.body))
                .collect()
        })
        .collect();
    let missing: Vec<String> = request
        .requested
        .iter()
        .zip(&options)
        .filter(|(_, o)| o.is_empty())
        .map(|(r, _)| r.name.clone())
        .collect();
    if !missing.is_empty() {
        return SelectionOutcome::Unsatisfiable { missing };
    }

    let issued_at: BTreeMap<CredentialId, Timestamp> =
        held.iter().map(|h| (h.id(), h.credential.body.issued_at)).collect();
    let mut assignments = Vec::new();
    let mut cursor = vec![0usize; options.len()];
    'odometer: loop {
        assignments.push(Assignment { picks: cursor.iter().zip(&options).map(|(&i, o)| o[i].id()).collect() });
        for k in (0..options.len()).rev() {
            cursor[k] += 1;
            if cursor[k] < options[k].len() {
                continue 'odometer;
            }
            cursor[k] = 0;
        }
        break;
    }

    let rank = |a: &Assignment| {
        let distinct = a.distinct();
        let mut ages: Vec<Timestamp> = distinct.iter().map(|id| issued_at[id]).collect();
        ages.sort_unstable_by(|x, y| y.cmp(x));
        (distinct.len(), std::cmp::Reverse(ages))
    };
    let default_index = (0..assignments.len()).min_by_key(|&i| rank(&assignments[i])).expect("at least one assignment");
    SelectionOutcome::Candidates(CandidateSelection { assignments, default_index })
}

/// Proof that the holder approved disclosure for one request. Only the
/// consent layer of a wallet can mint one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsentToken {
    request_id: Nonce,
}

impl ConsentToken {
    pub(crate) fn granted(request_id: Nonce) -> Self {
        ConsentToken { request_id }
    }

    pub fn request_id(&self) -> Nonce {
        self.request_id
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisclosedAttribute {
    pub name: String,
    pub value: String,
    #[serde(with = "crate::b64::array")]
    pub salt: Salt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresentedCredential {
    pub body: CredentialBody,
    pub signature: SchnorrSignature,
    pub disclosed: Vec<DisclosedAttribute>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSource {
    pub name: String,
    pub source: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Presentation {
    pub request_id: Nonce,
    pub nonce: Nonce,
    pub sources: Vec<PresentedCredential>,
    pub link_proof: KnowledgeProof,
    pub mapping: Vec<AttributeSource>,
}

impl Presentation {
    pub fn link_commitments(&self) -> Vec<Commitment> {
        self.sources.iter().map(|s| s.body.link_commitment.clone()).collect()
    }

    pub fn credential_ids(&self) -> Vec<CredentialId> {
        self.sources.iter().map(|s| s.body.credential_id).collect()
    }

    /// Every `(name, value)` pair a verifier can read off the presentation.
    pub fn disclosed_pairs(&self) -> Vec<(String, String)> {
        self.sources.iter().flat_map(|s| s.disclosed.iter().map(|d| (d.name.clone(), d.value.clone()))).collect()
    }
}

/// Builds a presentation disclosing exactly the requested attributes.
pub fn create_presentation<R: RngCore + ?Sized>(
    params: &GroupParams,
    link_secret: &LinkSecret,
    held: &[HeldCredential],
    request: &ProofRequest,
    assignment: &Assignment,
    consent: Option<&ConsentToken>,
    rng: &mut R,
) -> Result<Presentation, PresentationError> {
    match consent {
        Some(token) if token.request_id == request.request_id => {}
        _ => return Err(PresentationError::ConsentMissing),
    }
    if assignment.picks.len() != request.requested.len() {
        return Err(PresentationError::SelectionInvalid(format!(
            "{} picks for {} requested attributes",
            assignment.picks.len(),
            request.requested.len()
        )));
    }
    let distinct = assignment.distinct();
    let mut sources = Vec::with_capacity(distinct.len());
    let mut blindings = Vec::with_capacity(distinct.len());
    for id in &distinct {
        let h = held
            .iter()
            .find(|h| h.id() == *id)
            .ok_or_else(|| PresentationError::SelectionInvalid(format!("credential {id} not held")))?;
        sources.push(PresentedCredential {
            body: h.credential.body.clone(),
            signature: h.credential.signature.clone(),
            disclosed: Vec::new(),
        });
        blindings.push(h.blinding.clone());
    }
    let mut mapping = Vec::with_capacity(request.requested.len());
    for (req, id) in request.requested.iter().zip(&assignment.picks) {
        let index = distinct.iter().position(|d| d == id).expect("pick is in distinct set");
        let h = held.iter().find(|h| h.id() == *id).expect("checked above");
        if !req.restriction.admits(&h.credential.body) {
            return Err(PresentationError::SelectionInvalid(format!("credential {id} violates restriction on `{}`", req.name)));
        }
        let (Some(value), Some(salt)) = (h.credential.values.get(&req.name), h.credential.salts.get(&req.name)) else {
            return Err(PresentationError::SelectionInvalid(format!("credential {id} lacks `{}`", req.name)));
        };
        sources[index].disclosed.push(DisclosedAttribute { name: req.name.clone(), value: value.clone(), salt: *salt });
        mapping.push(AttributeSource { name: req.name.clone(), source: index as u64 });
    }
    let commitments: Vec<Commitment> = sources.iter().map(|s| s.body.link_commitment.clone()).collect();
    let link_proof =
        prove_equal_secret(params, &commitments, link_secret.scalar(), &blindings, &request.link_context(), rng)?;
    Ok(Presentation { request_id: request.request_id, nonce: request.nonce, sources, link_proof, mapping })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    Signature,
    Digest,
    Restriction,
    Link,
    Nonce,
    Revocation,
    Expiry,
}

impl Check {
    pub const ORDER: [Check; 7] =
        [Check::Signature, Check::Digest, Check::Restriction, Check::Link, Check::Nonce, Check::Revocation, Check::Expiry];

    pub fn name(self) -> &'static str {
        match self {
            Check::Signature => "signature",
            Check::Digest => "digest",
            Check::Restriction => "restriction",
            Check::Link => "link",
            Check::Nonce => "nonce",
            Check::Revocation => "revocation",
            Check::Expiry => "expiry",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub check: Check,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub request_id: Nonce,
    pub accepted: bool,
    pub checks: Vec<CheckOutcome>,
    /// Requested attribute values; empty unless accepted.
    pub disclosed_values: BTreeMap<String, String>,
    pub credential_ids: Vec<CredentialId>,
}

impl VerificationResult {
    pub fn passed(&self, check: Check) -> bool {
        self.checks.iter().any(|c| c.check == check && c.passed)
    }

    pub fn failed_checks(&self) -> Vec<Check> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.check).collect()
    }
}

fn outcome(check: Check, result: Result<(), String>) -> CheckOutcome {
    CheckOutcome { check, passed: result.is_ok(), detail: result.err() }
}

fn check_signatures(params: &GroupParams, registry: &Registry, p: &Presentation) -> Result<(), String> {
    if p.sources.is_empty() {
        return Err("no source credentials".into());
    }
    for (i, s) in p.sources.iter().enumerate() {
        let doc = registry.resolve(&s.body.issuer_did).map_err(|_| format!("source {i}: issuer not on registry"))?;
        if !verify_sig(params, &doc.verification_key, &s.body.signing_bytes(), &s.signature) {
            return Err(format!("source {i}: issuer signature invalid"));
        }
    }
    Ok(())
}

fn check_digests(registry: &Registry, p: &Presentation) -> Result<(), String> {
    for (i, s) in p.sources.iter().enumerate() {
        let schema = registry.resolve_schema(&s.body.schema_id).map_err(|_| format!("source {i}: unknown schema"))?;
        if s.body.digests.len() != schema.attribute_names.len() {
            return Err(format!("source {i}: digest count differs from schema"));
        }
        for d in &s.disclosed {
            let pos = schema.position(&d.name).ok_or_else(|| format!("source {i}: `{}` not in schema", d.name))?;
            if attribute_digest(&d.salt, &d.name, &d.value) != s.body.digests[pos] {
                return Err(format!("source {i}: digest mismatch for `{}`", d.name));
            }
        }
    }
    Ok(())
}

fn check_restrictions(request: &ProofRequest, p: &Presentation) -> Result<(), String> {
    if p.mapping.len() != request.requested.len() {
        return Err("mapping does not cover the request".into());
    }
    let mut disclosed = BTreeSet::new();
    for (i, s) in p.sources.iter().enumerate() {
        for d in &s.disclosed {
            if !disclosed.insert(d.name.as_str()) {
                return Err(format!("`{}` disclosed more than once", d.name));
            }
            if !p.mapping.iter().any(|m| m.name == d.name && m.source == i as u64) {
                return Err(format!("`{}` disclosed by unmapped source {i}", d.name));
            }
        }
    }
    if disclosed != request.names() {
        return Err("disclosed attributes differ from requested set".into());
    }
    let mut used = BTreeSet::new();
    for req in &request.requested {
        let m = p
            .mapping
            .iter()
            .find(|m| m.name == req.name)
            .ok_or_else(|| format!("`{}` has no source", req.name))?;
        let source = p
            .sources
            .get(m.source as usize)
            .ok_or_else(|| format!("`{}` maps to missing source {}", req.name, m.source))?;
        if !req.restriction.admits(&source.body) {
            return Err(format!("`{}` comes from a credential outside the restriction", req.name));
        }
        used.insert(m.source);
    }
    if used.len() != p.sources.len() {
        return Err("presentation includes unused sources".into());
    }
    Ok(())
}

fn check_link(params: &GroupParams, request: &ProofRequest, p: &Presentation) -> Result<(), String> {
    if p.request_id != request.request_id || p.nonce != request.nonce {
        return Err("presentation answers a different request".into());
    }
    if !verify_equal_secret(params, &p.link_commitments(), &p.link_proof, &request.link_context()) {
        return Err("link proof invalid".into());
    }
    Ok(())
}

fn check_revocation(registry: &Registry, p: &Presentation) -> Result<(), String> {
    match p.sources.iter().find(|s| registry.is_revoked(&s.body.issuer_did, &s.body.credential_id)) {
        Some(s) => Err(format!("credential {} revoked", s.body.credential_id)),
        None => Ok(()),
    }
}

/// Pure verification. `nonce_fresh` is the verifier's nonce-table answer.
pub fn evaluate(
    params: &GroupParams,
    registry: &Registry,
    request: &ProofRequest,
    presentation: &Presentation,
    nonce_fresh: bool,
    now: Timestamp,
) -> VerificationResult {
    let checks = vec![
        outcome(Check::Signature, check_signatures(params, registry, presentation)),
        outcome(Check::Digest, check_digests(registry, presentation)),
        outcome(Check::Restriction, check_restrictions(request, presentation)),
        outcome(Check::Link, check_link(params, request, presentation)),
        outcome(Check::Nonce, if nonce_fresh { Ok(()) } else { Err("nonce already used".into()) }),
        outcome(Check::Revocation, check_revocation(registry, presentation)),
        outcome(
            Check::Expiry,
            match request.expiry {
                Some(t) if now > t => Err(format!("request expired at {t}")),
                _ => Ok(()),
            },
        ),
    ];
    let accepted = checks.iter().all(|c| c.passed);
    let disclosed_values = if accepted {
        presentation.disclosed_pairs().into_iter().collect()
    } else {
        BTreeMap::new()
    };
    VerificationResult {
        request_id: request.request_id,
        accepted,
        checks,
        disclosed_values,
        credential_ids: presentation.credential_ids(),
    }
}

/// Verifier-side nonce table: every issued request, and which nonces have
/// been spent. A nonce is spent by the first verification attempt.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct VerifierBook {
    requests: BTreeMap<Nonce, ProofRequest>,
    consumed: BTreeSet<Nonce>,
}

impl VerifierBook {
    pub fn record(&mut self, request: ProofRequest) {
        self.requests.insert(request.nonce, request);
    }

    pub fn request(&self, nonce: &Nonce) -> Option<&ProofRequest> {
        self.requests.get(nonce)
    }

    pub fn is_consumed(&self, nonce: &Nonce) -> bool {
        self.consumed.contains(nonce)
    }

    pub fn verify(
        &mut self,
        params: &GroupParams,
        registry: &Registry,
        presentation: &Presentation,
        now: Timestamp,
    ) -> Result<VerificationResult, PresentationError> {
        let request = self.requests.get(&presentation.nonce).ok_or(PresentationError::UnknownRequest)?;
        let fresh = self.consumed.insert(presentation.nonce);
        Ok(evaluate(params, registry, request, presentation, fresh, now))
    }
}

impl Canonical for DisclosedAttribute {
    fn to_value(&self) -> Value {
        MapBuilder::new().text("name", &self.name).text("value", &self.value).bytes("salt", &self.salt).build()
    }

    fn from_value(value: &Value) -> Result<Self, DecodeError> {
        let mut r = MapReader::new(value)?;
        let d = DisclosedAttribute { name: r.text("name")?, value: r.text("value")?, salt: r.fixed::<SALT_LEN>("salt")? };
        r.finish()?;
        Ok(d)
    }
}

impl Canonical for PresentedCredential {
    fn to_value(&self) -> Value {
        MapBuilder::new()
            .field("body", self.body.to_value())
            .field("signature", self.signature.to_value())
            .field("disclosed", list_of(&self.disclosed))
            .build()
    }

    fn from_value(value: &Value) -> Result<Self, DecodeError> {
        let mut r = MapReader::new(value)?;
        let p = PresentedCredential {
            body: r.decode("body")?,
            signature: r.decode("signature")?,
            disclosed: r.decode_list("disclosed")?,
        };
        r.finish()?;
        Ok(p)
    }
}

impl Canonical for AttributeSource {
    fn to_value(&self) -> Value {
        MapBuilder::new().text("name", &self.name).uint("source", self.source).build()
    }

    fn from_value(value: &Value) -> Result<Self, DecodeError> {
        let mut r = MapReader::new(value)?;
        let m = AttributeSource { name: r.text("name")?, source: r.uint("source")? };
        r.finish()?;
        Ok(m)
    }
}

impl Canonical for Presentation {
    fn to_value(&self) -> Value {
        MapBuilder::new()
            .field("request_id", self.request_id.to_value())
            .field("nonce", self.nonce.to_value())
            .field("sources", list_of(&self.sources))
            .field("link_proof", self.link_proof.to_value())
            .field("mapping", list_of(&self.mapping))
            .build()
    }

    fn from_value(value: &Value) -> Result<Self, DecodeError> {
        let mut r = MapReader::new(value)?;
        let p = Presentation {
            request_id: r.decode("request_id")?,
            nonce: r.decode("nonce")?,
            sources: r.decode_list("sources")?,
            link_proof: r.decode("link_proof")?,
            mapping: r.decode_list("mapping")?,
        };
        r.finish()?;
        Ok(p)
    }
}
