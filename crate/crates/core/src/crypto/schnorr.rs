//! Key pairs and Schnorr signatures.
//!
//! Signature `(c, s)` on message `m` under `pk = g^sk`:
//! `R = g^k`, `c = H(pk, R, m)`, `s = k - c·sk`. Verification recomputes
//! `R' = g^s · pk^c` and checks `c = H(pk, R', m)`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::crypto::group::{GroupElement, GroupParams, Scalar};
use crate::encoding::{Canonical, DecodeError, MapBuilder, MapReader, Value};

const SIGNATURE_DOMAIN: &[u8] = b"cpx/schnorr-signature";

/// Secret/public key pair with `pk = g^sk`.
///
/// Serializable for local agent state files only; no protocol message embeds one.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyPair {
    sk: Scalar,
    pk: GroupElement,
}

impl std::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyPair").field("pk", &self.pk).finish_non_exhaustive()
    }
}

impl KeyPair {
    pub fn from_secret(params: &GroupParams, sk: Scalar) -> KeyPair {
        let sk = params.scalar(sk.0);
        let pk = params.exp_g(&sk);
        KeyPair { sk, pk }
    }

    pub fn public(&self) -> &GroupElement {
        &self.pk
    }

    pub fn secret(&self) -> &Scalar {
        &self.sk
    }
}

pub fn keygen<R: RngCore + ?Sized>(params: &GroupParams, rng: &mut R) -> KeyPair {
    KeyPair::from_secret(params, params.random_scalar(rng))
}

pub fn keygen_seeded(params: &GroupParams, seed: u64) -> KeyPair {
    keygen(params, &mut ChaCha20Rng::seed_from_u64(seed))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchnorrSignature {
    pub challenge: Scalar,
    pub response: Scalar,
}

impl Canonical for SchnorrSignature {
    fn to_value(&self) -> Value {
        MapBuilder::new()
            .field("challenge", self.challenge.to_value())
            .field("response", self.response.to_value())
            .build()
    }

    fn from_value(value: &Value) -> Result<Self, DecodeError> {
        let mut r = MapReader::new(value)?;
        let sig = SchnorrSignature { challenge: r.decode("challenge")?, response: r.decode("response")? };
        r.finish()?;
        Ok(sig)
    }
}

/// Challenge derivation shared by signer and verifier.
pub fn signature_challenge(
    params: &GroupParams,
    pk: &GroupElement,
    nonce_commitment: &GroupElement,
    message: &[u8],
) -> Scalar {
    let transcript = MapBuilder::new()
        .text("group", params.group_id())
        .field("pk", pk.to_value())
        .field("nonce", nonce_commitment.to_value())
        .bytes("message", message)
        .build()
        .encode();
    params.hash_to_scalar(SIGNATURE_DOMAIN, &transcript)
}

pub fn sign<R: RngCore + ?Sized>(
    params: &GroupParams,
    keypair: &KeyPair,
    message: &[u8],
    rng: &mut R,
) -> SchnorrSignature {
    let k = params.random_scalar(rng);
    let nonce = params.exp_g(&k);
    let challenge = signature_challenge(params, &keypair.pk, &nonce, message);
    let response = params.scalar_sub(&k, &params.scalar_mul(&challenge, &keypair.sk));
    SchnorrSignature { challenge, response }
}

/// Never panics: out-of-range scalars or a non-member key simply fail.
pub fn verify_sig(params: &GroupParams, pk: &GroupElement, message: &[u8], sig: &SchnorrSignature) -> bool {
    if !params.is_canonical_scalar(&sig.challenge)
        || !params.is_canonical_scalar(&sig.response)
        || !params.contains(pk)
    {
        return false;
    }
    let nonce = params.mul(&params.exp_g(&sig.response), &params.exp(pk, &sig.challenge));
    signature_challenge(params, pk, &nonce, message) == sig.challenge
}
