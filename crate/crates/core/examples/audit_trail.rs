//! The hash-chained audit log: reconstructing one credential's history and
//! locating an edited entry.
//!
//! `cargo run --example audit_trail`

use std::collections::BTreeMap;

use cpx::agents::StoreOutcome;
use cpx::audit::{export_jsonl, import_jsonl, trace_credential, verify_chain};
use cpx::connections::FormationMode;
use cpx::crypto::GroupParams;
use cpx::presentation::{AttributeRestriction, RequestedAttribute};
use cpx::scenario::config::{DOCTOR, GLASGOW, GMC};
use cpx::scenario::{setup_ecosystem, EcosystemConfig};

fn main() {
    let mut eco = setup_ecosystem(&EcosystemConfig::default(), GroupParams::production(), 7).unwrap();
    eco.connect(GMC, DOCTOR, FormationMode::Website).unwrap();
    let values: BTreeMap<String, String> =
        [("full_name", "Alex Morgan"), ("gmc_number", "7654321"), ("license_status", "full")]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
    let StoreOutcome::Accepted(license) = eco.issue_credential(GMC, DOCTOR, "gmc_license:1", &values).unwrap() else {
        panic!("license refused");
    };
    eco.connect(GLASGOW, DOCTOR, FormationMode::Website).unwrap();
    let gmc = eco.agent(GMC).unwrap().public_did.clone().unwrap();
    eco.request_proof(GLASGOW, DOCTOR, vec![RequestedAttribute::new("gmc_number", AttributeRestriction::issuer(&gmc))])
        .unwrap();
    eco.revoke_credential(GMC, license, "lapsed").unwrap();

    let events = eco.audit.events();
    println!("{} events, chain {}", events.len(), verify_chain(events));
    println!("history of license {}:", license.to_hex());
    for e in trace_credential(events, &license).unwrap() {
        println!("  #{:<3} {} {:<16} {}", e.index, e.timestamp.to_iso(), e.event_type.as_str(), e.payload.outcome.as_deref().unwrap_or(""));
    }

    let text = export_jsonl(events);
    println!("log export mentions the GMC number: {}", text.contains("7654321"));

    // Someone rewrites the verification outcome after the fact.
    let mut edited = import_jsonl(&text).unwrap();
    let k = edited.iter().position(|e| e.payload.outcome.as_deref() == Some("accepted")).unwrap();
    edited[k].payload.outcome = Some("rejected:link".into());
    println!("after editing entry {k}: {}", verify_chain(&edited));
    println!("trace on the edited log: {}", trace_credential(&edited, &license).unwrap_err());
}
