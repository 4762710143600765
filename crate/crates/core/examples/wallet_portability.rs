//! Listing everything a wallet holds, exporting it and restoring it on a new
//! device, then presenting from the restored copy.
//!
//! `cargo run --example wallet_portability`

use std::collections::BTreeMap;

use cpx::connections::FormationMode;
use cpx::crypto::GroupParams;
use cpx::presentation::{AttributeRestriction, RequestedAttribute};
use cpx::scenario::config::{DOCTOR, GMC, RCPE};
use cpx::scenario::{setup_ecosystem, EcosystemConfig};

fn main() {
    let mut eco = setup_ecosystem(&EcosystemConfig::default(), GroupParams::production(), 8).unwrap();
    eco.connect(GMC, DOCTOR, FormationMode::Website).unwrap();
    let values: BTreeMap<String, String> =
        [("gmc_number", "7654321"), ("status", "good"), ("issued_on", "2028-11-20")]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
    eco.issue_credential(GMC, DOCTOR, "good_standing:1", &values).unwrap();
    eco.connect(RCPE, DOCTOR, FormationMode::Website).unwrap();

    let inventory = eco.list_all_data(DOCTOR).unwrap();
    println!(
        "wallet: {} credential(s), {} connection(s), {} consent entries",
        inventory.credentials.len(),
        inventory.connections.len(),
        inventory.consent_log.len()
    );
    for c in &inventory.credentials {
        println!("  {} from {}: {:?}", c.schema_id, c.issuer_did, c.values);
    }

    let bytes = eco.export_wallet(DOCTOR).unwrap();
    println!("export: {} bytes", bytes.len());
    let mut corrupted = bytes.clone();
    let mid = corrupted.len() / 2;
    corrupted[mid] ^= 0x01;
    println!("corrupted import: {}", eco.import_wallet(DOCTOR, &corrupted).unwrap_err());

    eco.import_wallet(DOCTOR, &bytes).unwrap();
    println!("restored inventory identical: {}", eco.list_all_data(DOCTOR).unwrap() == inventory);

    let gmc = eco.agent(GMC).unwrap().public_did.clone().unwrap();
    let outcome = eco
        .request_proof(RCPE, DOCTOR, vec![RequestedAttribute::new("status", AttributeRestriction::issuer(&gmc))])
        .unwrap();
    println!("presentation from restored wallet accepted: {}", outcome.accepted());
}
