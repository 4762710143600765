//! The order-101 toy group is small enough to enumerate. This walks the
//! whole exponent space to show what the production group relies on.
//!
//! `cargo run --example toy_oracles`

use cpx::crypto::{commit, keygen, sign, verify_sig, GroupParams};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() {
    let params = GroupParams::toy();
    let q: u64 = params.order().try_into().unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    println!("group {}: p = {}, q = {q}", params.group_id(), params.modulus());

    // Discrete log by exhaustion.
    let keys = keygen(params, &mut rng);
    let found = (0..q).find(|x| params.exp_g(&params.scalar_from_u64(*x)) == *keys.public()).unwrap();
    println!("secret key recovered by exhaustion: {} (actual {})", found, keys.secret().value());

    // log_g(h) is what a cheating committer would need.
    let log_h = (0..q).find(|x| params.exp_g(&params.scalar_from_u64(*x)) == *params.h()).unwrap();
    println!("log_g(h) = {log_h}");

    // Every commitment has exactly one opening per possible secret.
    let s = params.scalar_from_u64(42);
    let r = params.scalar_from_u64(17);
    let c = commit(params, &s, &r);
    let openings: Vec<(u64, u64)> = (0..q)
        .flat_map(|s| (0..q).map(move |r| (s, r)))
        .filter(|(s, r)| c.opens_to(params, &params.scalar_from_u64(*s), &params.scalar_from_u64(*r)))
        .collect();
    println!("openings of commit(42, 17): {} in total, e.g. {:?}", openings.len(), &openings[..3]);

    // A signature fixes one challenge; count messages that collide with it.
    let sig = sign(params, &keys, b"gmc_number=7654321", &mut rng);
    let collisions = (0..2000u32).filter(|i| verify_sig(params, keys.public(), format!("forged-{i}").as_bytes(), &sig)).count();
    println!("signature accepted for {collisions} of 2000 unrelated messages (about 1 in {q} expected)");
}
