//! A hospital asks for two of the five degree attributes. The doctor's
//! wallet discloses exactly those two and proves the credential is theirs.
//!
//! `cargo run --example selective_presentation`

use std::collections::BTreeMap;

use cpx::agents::{Decision, ProofAnswer};
use cpx::connections::FormationMode;
use cpx::crypto::GroupParams;
use cpx::presentation::{AttributeRestriction, RequestedAttribute};
use cpx::scenario::config::{DOCTOR, GLASGOW, MEDICAL_SCHOOL};
use cpx::scenario::{setup_ecosystem, EcosystemConfig};

fn main() {
    let mut eco = setup_ecosystem(&EcosystemConfig::default(), GroupParams::production(), 5).unwrap();
    eco.connect(MEDICAL_SCHOOL, DOCTOR, FormationMode::FaceToFace).unwrap();
    let values: BTreeMap<String, String> = [
        ("full_name", "Alex Morgan"),
        ("date_of_birth", "1996-03-14"),
        ("degree", "MBChB"),
        ("university", "University of Edinburgh"),
        ("graduation_date", "2020-07-01"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect();
    println!("issued: {:?}", eco.issue_credential(MEDICAL_SCHOOL, DOCTOR, "medical_degree:1", &values).unwrap());

    eco.connect(GLASGOW, DOCTOR, FormationMode::Website).unwrap();
    let school = eco.agent(MEDICAL_SCHOOL).unwrap().public_did.clone().unwrap();
    let requested = vec![
        RequestedAttribute::new("degree", AttributeRestriction::schema("medical_degree:1").with_issuer(&school)),
        RequestedAttribute::new("university", AttributeRestriction::issuer(&school)),
    ];
    let request = eco.prepare_proof_request(GLASGOW, requested, None).unwrap();
    let ProofAnswer::Presented(presentation) = eco.answer_proof_request(DOCTOR, &request).unwrap() else {
        panic!("doctor did not present");
    };

    let source = &presentation.sources[0];
    println!(
        "presentation carries {} signed digests, {} disclosed values",
        source.body.digests.len(),
        source.disclosed.len()
    );
    for d in &source.disclosed {
        println!("  disclosed {} = {}", d.name, d.value);
    }
    let json = serde_json::to_string(&presentation).unwrap();
    println!("date of birth appears in the presentation: {}", json.contains("1996-03-14"));

    let result = eco.verify_presentation(GLASGOW, &presentation).unwrap();
    println!("accepted: {}", result.accepted);
    for c in &result.checks {
        println!("  {:<12} {}", c.check.name(), if c.passed { "ok" } else { "FAIL" });
    }

    // Same request again with consent refused: nothing leaves the wallet.
    eco.agent_mut(DOCTOR).unwrap().consent_policy = cpx::agents::ConsentPolicy::AlwaysAsk { answer: Decision::Deny };
    let again = eco.prepare_proof_request(GLASGOW, request.requested.clone(), None).unwrap();
    println!("with consent refused: {:?}", eco.answer_proof_request(DOCTOR, &again).unwrap());
}
