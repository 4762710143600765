//! The GMC suspends a license. A presentation that verified yesterday now
//! fails the revocation check, and every other check still passes.
//!
//! `cargo run --example revocation`

use std::collections::BTreeMap;

use cpx::agents::{ProofAnswer, StoreOutcome};
use cpx::connections::FormationMode;
use cpx::crypto::GroupParams;
use cpx::presentation::{AttributeRestriction, Check, RequestedAttribute};
use cpx::scenario::config::{DOCTOR, EDINBURGH, GMC};
use cpx::scenario::{setup_ecosystem, EcosystemConfig};

fn main() {
    let mut eco = setup_ecosystem(&EcosystemConfig::default(), GroupParams::production(), 6).unwrap();
    eco.connect(GMC, DOCTOR, FormationMode::Website).unwrap();
    let values: BTreeMap<String, String> =
        [("full_name", "Alex Morgan"), ("gmc_number", "7654321"), ("license_status", "full")]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
    let StoreOutcome::Accepted(license) = eco.issue_credential(GMC, DOCTOR, "gmc_license:1", &values).unwrap() else {
        panic!("license refused");
    };
    eco.connect(EDINBURGH, DOCTOR, FormationMode::Website).unwrap();
    let gmc = eco.agent(GMC).unwrap().public_did.clone().unwrap();
    let ask = || vec![RequestedAttribute::new("license_status", AttributeRestriction::issuer(&gmc))];

    let before = eco.request_proof(EDINBURGH, DOCTOR, ask()).unwrap();
    println!("before revocation: accepted = {}", before.accepted());

    let version = eco.revoke_credential(GMC, license, "suspended by tribunal").unwrap();
    let list = eco.registry.revocation_list(&gmc).unwrap();
    println!("revocation list v{version} holds {} id(s)", list.revoked_ids.len());

    let request = eco.prepare_proof_request(EDINBURGH, ask(), None).unwrap();
    let ProofAnswer::Presented(p) = eco.answer_proof_request(DOCTOR, &request).unwrap() else {
        panic!("doctor did not present");
    };
    let result = eco.verify_presentation(EDINBURGH, &p).unwrap();
    println!("after revocation: accepted = {}, failed = {:?}", result.accepted, result.failed_checks());
    assert_eq!(result.failed_checks(), vec![Check::Revocation]);

    // Revoking twice publishes nothing new.
    println!("revoke again -> v{}", eco.revoke_credential(GMC, license, "duplicate").unwrap());
}
