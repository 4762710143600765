//! Cryptographic substrate: group arithmetic, Schnorr signatures, Pedersen
//! commitments, proofs of knowledge and salted attribute digests.
//!
//! All functions are pure; randomness is always passed in by the caller.

pub mod commitment;
pub mod digest;
pub mod group;
pub mod proofs;
pub mod schnorr;

pub use commitment::{commit, Commitment};
pub use digest::{attribute_digest, hash, hash_parts, salted_digest, Digest, Salt, SaltedDigest};
pub use group::{GroupElement, GroupParams, Profile, Scalar};
pub use proofs::{
    prove_commitment_opening, prove_equal_secret, verify_equal_secret, verify_opening_proof, KnowledgeProof,
    ProofError,
};
pub use schnorr::{keygen, keygen_seeded, sign, verify_sig, KeyPair, SchnorrSignature};
