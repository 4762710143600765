//! Offer, blinded request and issuance of a GMC license. The issuer signs a
//! commitment to the doctor's link secret without ever seeing the secret.
//!
//! `cargo run --example blind_issuance`

use std::collections::BTreeMap;

use cpx::clock::SimClock;
use cpx::credentials::{build_credential, check_issued, check_request, make_offer, request_credential, LinkSecret};
use cpx::crypto::{keygen, GroupParams};
use cpx::ids::CredentialId;
use cpx::registry::{register_did, register_schema, CredentialSchema, Registry};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() {
    let params = GroupParams::production();
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let mut registry = Registry::new(params);
    let gmc = keygen(params, &mut rng);
    let gmc_did = register_did(&mut registry, &gmc, "General Medical Council", "inbox:gmc", &mut rng).unwrap();
    let schema = CredentialSchema::new("gmc_license:1", &["full_name", "gmc_number", "license_status"]);
    register_schema(&mut registry, schema.clone(), &gmc_did, &gmc, &mut rng).unwrap();

    let values: BTreeMap<String, String> = [("full_name", "Alex Morgan"), ("gmc_number", "7654321"), ("license_status", "full")]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let offer = make_offer(&registry, &gmc_did, "gmc_license:1", &values, &mut rng).unwrap();
    println!("offer {} previews {:?}", offer.offer_nonce.to_hex(), offer.attribute_preview.keys().collect::<Vec<_>>());

    let link_secret = LinkSecret::generate(params, &mut rng);
    let (request, pending) = request_credential(params, &link_secret, &offer, &mut rng);
    println!("request carries a commitment and an opening proof; issuer check: {:?}", check_request(params, &offer, &request));

    let issued_at = SimClock::default().now();
    let credential = build_credential(
        params,
        &gmc,
        &gmc_did,
        &schema,
        &values,
        request.link_commitment.clone(),
        CredentialId::random(&mut rng),
        issued_at,
        &mut rng,
    )
    .unwrap();
    println!("credential {} issued {}", credential.id().to_hex(), issued_at.date());
    for (name, digest) in schema.attribute_names.iter().zip(&credential.body.digests) {
        println!("  {name:<15} digest {}", &cpx::crypto::digest::to_hex(digest)[..16]);
    }
    println!("holder check: {:?}", check_issued(params, &registry, &pending, &credential));

    // An issuer that signs something other than what it offered is caught.
    let mut altered = values.clone();
    altered.insert("license_status".into(), "provisional".into());
    let swapped = build_credential(
        params,
        &gmc,
        &gmc_did,
        &schema,
        &altered,
        request.link_commitment.clone(),
        CredentialId::random(&mut rng),
        issued_at,
        &mut rng,
    )
    .unwrap();
    println!("swapped values: {:?}", check_issued(params, &registry, &pending, &swapped).unwrap_err());

    // A replayed request under a fresh offer fails: the proof is bound to the old nonce.
    let second = make_offer(&registry, &gmc_did, "gmc_license:1", &values, &mut rng).unwrap();
    let mut replay = request.clone();
    replay.offer_nonce = second.offer_nonce;
    println!("replayed request: {}", check_request(params, &second, &replay).unwrap_err());
}
