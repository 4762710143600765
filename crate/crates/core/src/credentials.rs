//! Credential issuance: offer, blinded request, issuance and holder-side
//! checks.
//!
//! The holder never reveals its link secret. It sends a Pedersen commitment
//! to the secret together with a proof of opening bound to the offer nonce.
//! The issuer signs a body holding salted digests of the attribute values and
//! that commitment, then ships values and salts alongside so the holder can
//! recompute every digest.

use std::collections::BTreeMap;
use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::b64;
use crate::clock::Timestamp;
use crate::crypto::digest::{attribute_digest, Digest, Salt, SALT_LEN};
use crate::crypto::proofs::{prove_commitment_opening, verify_opening_proof, KnowledgeProof};
use crate::crypto::{commit, sign, verify_sig, Commitment, GroupParams, KeyPair, Scalar, SchnorrSignature};
use crate::encoding::{as_bytes, text_map, Canonical, DecodeError, MapBuilder, MapReader, Value};
use crate::ids::{CredentialId, Nonce};
use crate::registry::{CredentialSchema, Did, Registry};

const BODY_DOMAIN: &str = "cpx/credential-body";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CredentialError {
    #[error("schema `{0}` is not published")]
    UnknownSchema(String),
    #[error("missing value for attribute `{0}`")]
    MissingAttribute(String),
    #[error("attribute `{0}` is not part of the schema")]
    UnexpectedAttribute(String),
    #[error("request is not bound to this offer's nonce")]
    ProofBindingMismatch,
    #[error("request proof of the link commitment does not verify")]
    BadRequestProof,
}

/// Holder-only secret committed into every credential of one wallet.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkSecret(Scalar);

impl LinkSecret {
    pub fn generate<R: RngCore + ?Sized>(params: &GroupParams, rng: &mut R) -> Self {
        LinkSecret(params.random_scalar(rng))
    }

    pub fn from_scalar(s: Scalar) -> Self {
        LinkSecret(s)
    }

    pub fn scalar(&self) -> &Scalar {
        &self.0
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.0.to_bytes()
    }
}

impl fmt::Debug for LinkSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("LinkSecret(..)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialOffer {
    pub schema_id: String,
    pub attribute_preview: BTreeMap<String, String>,
    pub issuer_did: Did,
    pub offer_nonce: Nonce,
}

/// Builds an offer whose preview covers exactly the schema attributes.
pub fn make_offer<R: RngCore + ?Sized>(
    registry: &Registry,
    issuer_did: &Did,
    schema_id: &str,
    values: &BTreeMap<String, String>,
    rng: &mut R,
) -> Result<CredentialOffer, CredentialError> {
    let schema =
        registry.resolve_schema(schema_id).map_err(|_| CredentialError::UnknownSchema(schema_id.to_string()))?;
    check_values(schema, values)?;
    Ok(CredentialOffer {
        schema_id: schema_id.to_string(),
        attribute_preview: values.clone(),
        issuer_did: issuer_did.clone(),
        offer_nonce: Nonce::random(rng),
    })
}

fn check_values(schema: &CredentialSchema, values: &BTreeMap<String, String>) -> Result<(), CredentialError> {
    if let Some(missing) = schema.attribute_names.iter().find(|n| !values.contains_key(*n)) {
        return Err(CredentialError::MissingAttribute(missing.clone()));
    }
    if let Some(extra) = values.keys().find(|k| schema.position(k).is_none()) {
        return Err(CredentialError::UnexpectedAttribute(extra.clone()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialRequest {
    pub offer_nonce: Nonce,
    pub link_commitment: Commitment,
    pub opening_proof: KnowledgeProof,
}

/// Holder-side state for a request in flight. Holds the blinding needed to
/// use the credential later.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingRequest {
    pub offer: CredentialOffer,
    pub link_commitment: Commitment,
    pub blinding: Scalar,
}

pub fn request_credential<R: RngCore + ?Sized>(
    params: &GroupParams,
    link_secret: &LinkSecret,
    offer: &CredentialOffer,
    rng: &mut R,
) -> (CredentialRequest, PendingRequest) {
    let blinding = params.random_scalar(rng);
    let link_commitment = commit(params, link_secret.scalar(), &blinding);
    let opening_proof = prove_commitment_opening(
        params,
        &link_commitment,
        link_secret.scalar(),
        &blinding,
        offer.offer_nonce.as_bytes(),
        rng,
    );
    let request = CredentialRequest { offer_nonce: offer.offer_nonce, link_commitment: link_commitment.clone(), opening_proof };
    (request, PendingRequest { offer: offer.clone(), link_commitment, blinding })
}

/// Issuer-side check of a request against the offer it answers.
pub fn check_request(
    params: &GroupParams,
    offer: &CredentialOffer,
    request: &CredentialRequest,
) -> Result<(), CredentialError> {
    if request.offer_nonce != offer.offer_nonce {
        return Err(CredentialError::ProofBindingMismatch);
    }
    if !verify_opening_proof(params, &request.link_commitment, &request.opening_proof, offer.offer_nonce.as_bytes()) {
        return Err(CredentialError::BadRequestProof);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialBody {
    pub credential_id: CredentialId,
    pub schema_id: String,
    pub issuer_did: Did,
    pub issued_at: Timestamp,
    /// One digest per schema attribute, in schema order.
    #[serde(with = "b64::array_list")]
    pub digests: Vec<Digest>,
    pub link_commitment: Commitment,
}

impl CredentialBody {
    pub fn signing_bytes(&self) -> Vec<u8> {
        MapBuilder::new().text("domain", BODY_DOMAIN).field("body", self.to_value()).build().encode()
    }
}

impl Canonical for CredentialBody {
    fn to_value(&self) -> Value {
        MapBuilder::new()
            .field("credential_id", self.credential_id.to_value())
            .text("schema_id", &self.schema_id)
            .text("issuer_did", self.issuer_did.as_str())
            .text("issued_at", &self.issued_at.to_iso())
            .field("digests", Value::List(self.digests.iter().map(|d| Value::Bytes(d.to_vec())).collect()))
            .field("link_commitment", self.link_commitment.to_value())
            .build()
    }

    fn from_value(value: &Value) -> Result<Self, DecodeError> {
        let mut r = MapReader::new(value)?;
        let credential_id = r.decode("credential_id")?;
        let schema_id = r.text("schema_id")?;
        let issuer_did = Did::new(r.text("issuer_did")?);
        let issued_text = r.text("issued_at")?;
        let issued_at = Timestamp::parse_iso(&issued_text)
            .map_err(|reason| DecodeError::Invalid { field: "issued_at".into(), reason })?;
        if issued_at.to_iso() != issued_text {
            return Err(DecodeError::Invalid { field: "issued_at".into(), reason: "non-canonical timestamp".into() });
        }
        let digests = r
            .list("digests")?
            .iter()
            .map(|v| {
                let raw = as_bytes(v, "digests")?;
                raw.try_into().map_err(|_| DecodeError::Invalid {
                    field: "digests".into(),
                    reason: format!("expected 32 bytes, got {}", raw.len()),
                })
            })
            .collect::<Result<Vec<Digest>, _>>()?;
        let link_commitment = r.decode("link_commitment")?;
        r.finish()?;
        Ok(CredentialBody { credential_id, schema_id, issuer_did, issued_at, digests, link_commitment })
    }
}

/// Holder-side credential record: body, the issuer's signature, and the
/// values and salts that open the digests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuedCredential {
    pub body: CredentialBody,
    pub values: BTreeMap<String, String>,
    #[serde(with = "b64::array_map")]
    pub salts: BTreeMap<String, Salt>,
    pub signature: SchnorrSignature,
}

impl IssuedCredential {
    pub fn id(&self) -> CredentialId {
        self.body.credential_id
    }
}

impl Canonical for IssuedCredential {
    fn to_value(&self) -> Value {
        let salts = Value::Map(self.salts.iter().map(|(k, v)| (k.clone(), Value::Bytes(v.to_vec()))).collect());
        MapBuilder::new()
            .field("body", self.body.to_value())
            .field("values", text_map(&self.values))
            .field("salts", salts)
            .field("signature", self.signature.to_value())
            .build()
    }

    fn from_value(value: &Value) -> Result<Self, DecodeError> {
        let mut r = MapReader::new(value)?;
        let body = r.decode("body")?;
        let values = decode_map(r.get("values")?, "values", |v| crate::encoding::as_text(v, "values"))?;
        let salts = decode_map(r.get("salts")?, "salts", |v| {
            let raw = as_bytes(v, "salts")?;
            <Salt>::try_from(raw).map_err(|_| DecodeError::Invalid {
                field: "salts".into(),
                reason: format!("expected {SALT_LEN} bytes"),
            })
        })?;
        let signature = r.decode("signature")?;
        r.finish()?;
        Ok(IssuedCredential { body, values, salts, signature })
    }
}

fn decode_map<T>(
    value: &Value,
    field: &str,
    f: impl Fn(&Value) -> Result<T, DecodeError>,
) -> Result<BTreeMap<String, T>, DecodeError> {
    match value {
        Value::Map(m) => m.iter().map(|(k, v)| Ok((k.clone(), f(v)?))).collect(),
        _ => Err(DecodeError::Invalid { field: field.into(), reason: "expected map".into() }),
    }
}

/// Signs a credential body over `values`. Salts are fresh per attribute.
#[allow(clippy::too_many_arguments)]
pub fn build_credential<R: RngCore + ?Sized>(
    params: &GroupParams,
    issuer_keys: &KeyPair,
    issuer_did: &Did,
    schema: &CredentialSchema,
    values: &BTreeMap<String, String>,
    link_commitment: Commitment,
    credential_id: CredentialId,
    issued_at: Timestamp,
    rng: &mut R,
) -> Result<IssuedCredential, CredentialError> {
    check_values(schema, values)?;
    let mut salts = BTreeMap::new();
    let mut digests = Vec::with_capacity(schema.attribute_names.len());
    for name in &schema.attribute_names {
        let mut salt = [0u8; SALT_LEN];
        rng.fill_bytes(&mut salt);
        digests.push(attribute_digest(&salt, name, &values[name]));
        salts.insert(name.clone(), salt);
    }
    let body = CredentialBody {
        credential_id,
        schema_id: schema.schema_id.clone(),
        issuer_did: issuer_did.clone(),
        issued_at,
        digests,
        link_commitment,
    };
    let signature = sign(params, issuer_keys, &body.signing_bytes(), rng);
    Ok(IssuedCredential { body, values: values.clone(), salts, signature })
}

/// Wallet record: the credential plus the blinding of its link commitment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeldCredential {
    pub credential: IssuedCredential,
    pub blinding: Scalar,
}

impl HeldCredential {
    pub fn id(&self) -> CredentialId {
        self.credential.id()
    }
}

/// Payload of a `credential-issue` envelope.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueMessage {
    pub offer_nonce: Nonce,
    pub credential: IssuedCredential,
}

/// Why a holder refused an issued credential.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[serde(tag = "reason", content = "detail")]
pub enum Refusal {
    #[error("no request is pending for this offer")]
    UnsolicitedCredential,
    #[error("schema differs from the offer")]
    SchemaMismatch,
    #[error("issuer differs from the offer")]
    IssuerMismatch,
    #[error("issuer DID cannot be resolved")]
    UnknownIssuer,
    #[error("schema cannot be resolved")]
    UnknownSchema,
    #[error("issuer signature does not verify")]
    BadSignature,
    #[error("digest does not match value and salt for `{0}`")]
    DigestMismatch(String),
    #[error("value for `{0}` differs from the approved preview")]
    ValueMismatch(String),
    #[error("link commitment is not the one requested")]
    ForeignCommitment,
    #[error("credential id already held")]
    DuplicateCredential,
}

/// Stateless validity: issuer signature under the registry key, schema
/// shape, and every digest reopened from its value and salt.
pub fn check_credential(params: &GroupParams, registry: &Registry, cred: &IssuedCredential) -> Result<(), Refusal> {
    let issuer = registry.resolve(&cred.body.issuer_did).map_err(|_| Refusal::UnknownIssuer)?;
    if !verify_sig(params, &issuer.verification_key, &cred.body.signing_bytes(), &cred.signature) {
        return Err(Refusal::BadSignature);
    }
    let schema = registry.resolve_schema(&cred.body.schema_id).map_err(|_| Refusal::UnknownSchema)?;
    if cred.body.digests.len() != schema.attribute_names.len()
        || cred.values.len() != schema.attribute_names.len()
        || cred.salts.len() != schema.attribute_names.len()
    {
        return Err(Refusal::SchemaMismatch);
    }
    for (name, digest) in schema.attribute_names.iter().zip(&cred.body.digests) {
        let (Some(value), Some(salt)) = (cred.values.get(name), cred.salts.get(name)) else {
            return Err(Refusal::SchemaMismatch);
        };
        if attribute_digest(salt, name, value) != *digest {
            return Err(Refusal::DigestMismatch(name.clone()));
        }
    }
    Ok(())
}

/// Full holder-side acceptance check against the pending request.
pub fn check_issued(
    params: &GroupParams,
    registry: &Registry,
    pending: &PendingRequest,
    cred: &IssuedCredential,
) -> Result<(), Refusal> {
    if cred.body.schema_id != pending.offer.schema_id {
        return Err(Refusal::SchemaMismatch);
    }
    if cred.body.issuer_did != pending.offer.issuer_did {
        return Err(Refusal::IssuerMismatch);
    }
    check_credential(params, registry, cred)?;
    for (name, approved) in &pending.offer.attribute_preview {
        if cred.values.get(name) != Some(approved) {
            return Err(Refusal::ValueMismatch(name.clone()));
        }
    }
    if cred.body.link_commitment != pending.link_commitment {
        return Err(Refusal::ForeignCommitment);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::keygen;
    use crate::registry::{register_did, register_schema};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    struct Fixture {
        params: &'static GroupParams,
        registry: Registry,
        gmc: KeyPair,
        gmc_did: Did,
        rng: ChaCha20Rng,
    }

    fn fixture(params: &'static GroupParams) -> Fixture {
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let mut registry = Registry::new(params);
        let gmc = keygen(params, &mut rng);
        let gmc_did = register_did(&mut registry, &gmc, "General Medical Council", "inbox:gmc", &mut rng).unwrap();
        let schema = CredentialSchema::new("gmc_license:1", &["full_name", "gmc_number", "license_status"]);
        register_schema(&mut registry, schema, &gmc_did, &gmc, &mut rng).unwrap();
        Fixture { params, registry, gmc, gmc_did, rng }
    }

    fn license_values() -> BTreeMap<String, String> {
        [("full_name", "Alex Morgan"), ("gmc_number", "7654321"), ("license_status", "full")]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    fn issue(f: &mut Fixture, pending: &PendingRequest, values: &BTreeMap<String, String>) -> IssuedCredential {
        let schema = f.registry.resolve_schema("gmc_license:1").unwrap().clone();
        build_credential(
            f.params,
            &f.gmc,
            &f.gmc_did,
            &schema,
            values,
            pending.link_commitment.clone(),
            CredentialId::random(&mut f.rng),
            Timestamp::from_unix(1_600_000_000),
            &mut f.rng,
        )
        .unwrap()
    }

    #[test]
    fn offer_validation() {
        let mut f = fixture(GroupParams::toy());
        assert!(make_offer(&f.registry, &f.gmc_did, "gmc_license:1", &license_values(), &mut f.rng).is_ok());
        let mut partial = license_values();
        partial.remove("gmc_number");
        assert_eq!(
            make_offer(&f.registry, &f.gmc_did, "gmc_license:1", &partial, &mut f.rng),
            Err(CredentialError::MissingAttribute("gmc_number".into()))
        );
        assert!(matches!(
            make_offer(&f.registry, &f.gmc_did, "nope:1", &license_values(), &mut f.rng),
            Err(CredentialError::UnknownSchema(_))
        ));
    }

    #[test]
    fn request_binds_to_offer_nonce() {
        let mut f = fixture(GroupParams::production());
        let secret = LinkSecret::generate(f.params, &mut f.rng);
        let offer = make_offer(&f.registry, &f.gmc_did, "gmc_license:1", &license_values(), &mut f.rng).unwrap();
        let (req, _) = request_credential(f.params, &secret, &offer, &mut f.rng);
        assert_eq!(check_request(f.params, &offer, &req), Ok(()));

        let other = make_offer(&f.registry, &f.gmc_did, "gmc_license:1", &license_values(), &mut f.rng).unwrap();
        assert_eq!(check_request(f.params, &other, &req), Err(CredentialError::ProofBindingMismatch));
        let mut rebound = req.clone();
        rebound.offer_nonce = other.offer_nonce;
        assert_eq!(check_request(f.params, &other, &rebound), Err(CredentialError::BadRequestProof));
    }

    #[test]
    fn holder_accepts_and_refuses() {
        let mut f = fixture(GroupParams::production());
        let secret = LinkSecret::generate(f.params, &mut f.rng);
        let offer = make_offer(&f.registry, &f.gmc_did, "gmc_license:1", &license_values(), &mut f.rng).unwrap();
        let (_, pending) = request_credential(f.params, &secret, &offer, &mut f.rng);

        let good = issue(&mut f, &pending, &license_values());
        assert_eq!(check_issued(f.params, &f.registry, &pending, &good), Ok(()));

        let mut misspelt = license_values();
        misspelt.insert("full_name".into(), "Alex Morgen".into());
        let bad = issue(&mut f, &pending, &misspelt);
        assert_eq!(
            check_issued(f.params, &f.registry, &pending, &bad),
            Err(Refusal::ValueMismatch("full_name".into()))
        );

        let foreign_pending = PendingRequest {
            link_commitment: commit(f.params, &f.params.scalar_from_u64(5), &f.params.scalar_from_u64(6)),
            ..pending.clone()
        };
        let foreign = issue(&mut f, &foreign_pending, &license_values());
        assert_eq!(check_issued(f.params, &f.registry, &pending, &foreign), Err(Refusal::ForeignCommitment));

        let mut mutated = good.clone();
        mutated.body.digests[1][0] ^= 1;
        assert_eq!(check_issued(f.params, &f.registry, &pending, &mutated), Err(Refusal::BadSignature));
    }

    #[test]
    fn canonical_round_trip() {
        let mut f = fixture(GroupParams::toy());
        let secret = LinkSecret::generate(f.params, &mut f.rng);
        let offer = make_offer(&f.registry, &f.gmc_did, "gmc_license:1", &license_values(), &mut f.rng).unwrap();
        let (_, pending) = request_credential(f.params, &secret, &offer, &mut f.rng);
        let cred = issue(&mut f, &pending, &license_values());
        let bytes = cred.canonical_bytes();
        assert_eq!(IssuedCredential::from_canonical_bytes(&bytes).unwrap(), cred);
        let json = serde_json::to_string(&cred).unwrap();
        assert_eq!(serde_json::from_str::<IssuedCredential>(&json).unwrap(), cred);
    }

    #[test]
    fn body_byte_mutations_never_verify() {
        let mut f = fixture(GroupParams::production());
        let secret = LinkSecret::generate(f.params, &mut f.rng);
        let offer = make_offer(&f.registry, &f.gmc_did, "gmc_license:1", &license_values(), &mut f.rng).unwrap();
        let (_, pending) = request_credential(f.params, &secret, &offer, &mut f.rng);
        let cred = issue(&mut f, &pending, &license_values());
        let bytes = cred.body.canonical_bytes();
        for _ in 0..300 {
            let mut m = bytes.clone();
            let i = f.rng.gen_range(0..m.len());
            m[i] ^= f.rng.gen_range(1..=255u8);
            if let Ok(body) = CredentialBody::from_canonical_bytes(&m) {
                let forged = IssuedCredential { body, ..cred.clone() };
                assert!(check_credential(f.params, &f.registry, &forged).is_err());
            }
        }
    }
}
