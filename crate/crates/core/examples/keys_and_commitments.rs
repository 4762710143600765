//! Key pairs, Schnorr signatures, Pedersen commitments and the two
//! Fiat-Shamir proofs of knowledge.
//!
//! `cargo run --example keys_and_commitments`

use cpx::crypto::{
    commit, keygen, prove_commitment_opening, prove_equal_secret, sign, verify_equal_secret, verify_opening_proof,
    verify_sig, GroupParams,
};
use cpx::registry::Did;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() {
    let params = GroupParams::production();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    println!("group {} ({}-byte elements)", params.group_id(), params.element_len());

    let gmc = keygen(params, &mut rng);
    println!("GMC DID {}", Did::from_key(gmc.public()));
    let message = b"gmc_number=7654321";
    let sig = sign(params, &gmc, message, &mut rng);
    println!("signature verifies: {}", verify_sig(params, gmc.public(), message, &sig));
    println!("altered message verifies: {}", verify_sig(params, gmc.public(), b"gmc_number=7654322", &sig));

    // A holder's link secret committed twice under independent blindings.
    let secret = params.random_scalar(&mut rng);
    let (r1, r2) = (params.random_scalar(&mut rng), params.random_scalar(&mut rng));
    let c1 = commit(params, &secret, &r1);
    let c2 = commit(params, &secret, &r2);
    println!("commitments differ: {}", c1 != c2);

    let opening = prove_commitment_opening(params, &c1, &secret, &r1, b"offer-nonce", &mut rng);
    println!("opening proof verifies: {}", verify_opening_proof(params, &c1, &opening, b"offer-nonce"));
    println!("opening proof under other context: {}", verify_opening_proof(params, &c1, &opening, b"other"));

    let commitments = [c1.clone(), c2.clone()];
    let same = prove_equal_secret(params, &commitments, &secret, &[r1.clone(), r2], b"request", &mut rng).unwrap();
    println!("equal-secret proof verifies: {}", verify_equal_secret(params, &commitments, &same, b"request"));

    // A commitment to a different secret cannot join the statement.
    let other = params.random_scalar(&mut rng);
    let r3 = params.random_scalar(&mut rng);
    let mixed = [c1, commit(params, &other, &r3)];
    let forged = prove_equal_secret(params, &mixed, &secret, &[r1, r3], b"request", &mut rng).unwrap();
    println!("mixed-secret proof verifies: {}", verify_equal_secret(params, &mixed, &forged, b"request"));
}
