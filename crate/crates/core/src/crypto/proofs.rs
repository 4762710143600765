//! Proofs of knowledge over Pedersen commitments, made non-interactive with
//! Fiat–Shamir.
//!
//! The equal-secret relation: commitments `C_i = g^s · h^{r_i}` all hide the
//! same `s`. Prover picks `a, b_i`, sends `T_i = g^a · h^{b_i}`, receives
//! `c`, answers `z_s = a + c·s` and `z_i = b_i + c·r_i`. The verifier checks
//! `g^{z_s} · h^{z_i} = T_i · C_i^c` for every `i`. An opening proof is the
//! same relation with a single commitment.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::commitment::Commitment;
use crate::crypto::group::{GroupElement, GroupParams, Scalar};
use crate::encoding::{list_of, Canonical, DecodeError, MapBuilder, MapReader, Value};

pub const OPENING_LABEL: &str = "cpx/commitment-opening";
pub const EQUAL_SECRET_LABEL: &str = "cpx/equal-secret";

const CHALLENGE_DOMAIN: &[u8] = b"cpx/fiat-shamir";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProofError {
    #[error("statement has no commitments")]
    EmptyStatement,
    #[error("{commitments} commitments but {blindings} blindings")]
    LengthMismatch { commitments: usize, blindings: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeProof {
    pub commitment_nonce: Vec<GroupElement>,
    pub challenge: Scalar,
    pub responses: Vec<Scalar>,
}

impl Canonical for KnowledgeProof {
    fn to_value(&self) -> Value {
        MapBuilder::new()
            .field("challenge", self.challenge.to_value())
            .field("commitment_nonce", list_of(&self.commitment_nonce))
            .field("responses", list_of(&self.responses))
            .build()
    }

    fn from_value(value: &Value) -> Result<Self, DecodeError> {
        let mut r = MapReader::new(value)?;
        let proof = KnowledgeProof {
            challenge: r.decode("challenge")?,
            commitment_nonce: r.decode_list("commitment_nonce")?,
            responses: r.decode_list("responses")?,
        };
        r.finish()?;
        Ok(proof)
    }
}

/// `H(label, statement, nonce commitments, context)` reduced mod `q`.
pub fn fiat_shamir_challenge(
    params: &GroupParams,
    label: &str,
    statement: &[GroupElement],
    nonce_commitments: &[GroupElement],
    context: &[u8],
) -> Scalar {
    let transcript = MapBuilder::new()
        .text("group", params.group_id())
        .text("label", label)
        .field("statement", list_of(statement))
        .field("nonce_commitments", list_of(nonce_commitments))
        .bytes("context", context)
        .build()
        .encode();
    params.hash_to_scalar(CHALLENGE_DOMAIN, &transcript)
}

/// Interactive form of the equal-secret protocol, exposed so tests can drive
/// it with arbitrary challenges.
pub mod sigma {
    use super::*;

    pub struct EqualSecretProver {
        secret_nonce: Scalar,
        blinding_nonces: Vec<Scalar>,
        nonce_commitments: Vec<GroupElement>,
    }

    impl EqualSecretProver {
        pub fn commit<R: RngCore + ?Sized>(params: &GroupParams, count: usize, rng: &mut R) -> Self {
            let secret_nonce = params.random_scalar(rng);
            let blinding_nonces: Vec<Scalar> = (0..count).map(|_| params.random_scalar(rng)).collect();
            let g_a = params.exp_g(&secret_nonce);
            let nonce_commitments = blinding_nonces
                .iter()
                .map(|b| params.mul(&g_a, &params.exp(params.h(), b)))
                .collect();
            EqualSecretProver { secret_nonce, blinding_nonces, nonce_commitments }
        }

        pub fn nonce_commitments(&self) -> &[GroupElement] {
            &self.nonce_commitments
        }

        /// Responses `[z_s, z_1, ..., z_n]`.
        pub fn respond(
            &self,
            params: &GroupParams,
            secret: &Scalar,
            blindings: &[Scalar],
            challenge: &Scalar,
        ) -> Vec<Scalar> {
            let mut out = Vec::with_capacity(blindings.len() + 1);
            out.push(params.scalar_add(&self.secret_nonce, &params.scalar_mul(challenge, secret)));
            for (b, r) in self.blinding_nonces.iter().zip(blindings) {
                out.push(params.scalar_add(b, &params.scalar_mul(challenge, r)));
            }
            out
        }
    }

    /// Checks the verification equations for a transcript.
    pub fn check_transcript(
        params: &GroupParams,
        commitments: &[Commitment],
        nonce_commitments: &[GroupElement],
        challenge: &Scalar,
        responses: &[Scalar],
    ) -> bool {
        let n = commitments.len();
        if n == 0 || nonce_commitments.len() != n || responses.len() != n + 1 {
            return false;
        }
        if !params.is_canonical_scalar(challenge) || !responses.iter().all(|z| params.is_canonical_scalar(z)) {
            return false;
        }
        if !commitments.iter().all(|c| params.contains(c.element()))
            || !nonce_commitments.iter().all(|t| params.contains(t))
        {
            return false;
        }
        let g_zs = params.exp_g(&responses[0]);
        commitments.iter().zip(nonce_commitments).zip(&responses[1..]).all(|((c, t), z)| {
            let lhs = params.mul(&g_zs, &params.exp(params.h(), z));
            let rhs = params.mul(t, &params.exp(c.element(), challenge));
            lhs == rhs
        })
    }
}

fn prove<R: RngCore + ?Sized>(
    params: &GroupParams,
    label: &str,
    commitments: &[Commitment],
    secret: &Scalar,
    blindings: &[Scalar],
    context: &[u8],
    rng: &mut R,
) -> Result<KnowledgeProof, ProofError> {
    if commitments.is_empty() {
        return Err(ProofError::EmptyStatement);
    }
    if commitments.len() != blindings.len() {
        return Err(ProofError::LengthMismatch { commitments: commitments.len(), blindings: blindings.len() });
    }
    let prover = sigma::EqualSecretProver::commit(params, commitments.len(), rng);
    let statement: Vec<GroupElement> = commitments.iter().map(|c| c.0.clone()).collect();
    let challenge = fiat_shamir_challenge(params, label, &statement, prover.nonce_commitments(), context);
    let responses = prover.respond(params, secret, blindings, &challenge);
    Ok(KnowledgeProof { commitment_nonce: prover.nonce_commitments().to_vec(), challenge, responses })
}

fn verify(params: &GroupParams, label: &str, commitments: &[Commitment], proof: &KnowledgeProof, context: &[u8]) -> bool {
    if commitments.is_empty() {
        return false;
    }
    let statement: Vec<GroupElement> = commitments.iter().map(|c| c.0.clone()).collect();
    let expected = fiat_shamir_challenge(params, label, &statement, &proof.commitment_nonce, context);
    expected == proof.challenge
        && sigma::check_transcript(params, commitments, &proof.commitment_nonce, &proof.challenge, &proof.responses)
}

pub fn prove_commitment_opening<R: RngCore + ?Sized>(
    params: &GroupParams,
    commitment: &Commitment,
    s: &Scalar,
    r: &Scalar,
    context_nonce: &[u8],
    rng: &mut R,
) -> KnowledgeProof {
    prove(params, OPENING_LABEL, std::slice::from_ref(commitment), s, std::slice::from_ref(r), context_nonce, rng)
        .expect("single commitment statement is never empty")
}

pub fn verify_opening_proof(
    params: &GroupParams,
    commitment: &Commitment,
    proof: &KnowledgeProof,
    context_nonce: &[u8],
) -> bool {
    verify(params, OPENING_LABEL, std::slice::from_ref(commitment), proof, context_nonce)
}

/// Proves one secret opens every commitment, each with its own blinding.
pub fn prove_equal_secret<R: RngCore + ?Sized>(
    params: &GroupParams,
    commitments: &[Commitment],
    secret: &Scalar,
    blindings: &[Scalar],
    context_nonce: &[u8],
    rng: &mut R,
) -> Result<KnowledgeProof, ProofError> {
    prove(params, EQUAL_SECRET_LABEL, commitments, secret, blindings, context_nonce, rng)
}

pub fn verify_equal_secret(
    params: &GroupParams,
    commitments: &[Commitment],
    proof: &KnowledgeProof,
    context_nonce: &[u8],
) -> bool {
    verify(params, EQUAL_SECRET_LABEL, commitments, proof, context_nonce)
}
