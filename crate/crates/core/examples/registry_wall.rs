//! The shared registry: trust anchors publish DIDs and schemas, anyone
//! resolves them, and nothing already written can be replaced.
//!
//! `cargo run --example registry_wall`

use cpx::crypto::{keygen, GroupParams};
use cpx::registry::{register_did, register_schema, CredentialSchema, DidDocument, EntryPayload, Registry};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() {
    let params = GroupParams::production();
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let mut registry = Registry::new(params);

    let gmc = keygen(params, &mut rng);
    let gmc_did = register_did(&mut registry, &gmc, "General Medical Council", "inbox:gmc", &mut rng).unwrap();
    let school = keygen(params, &mut rng);
    let school_did = register_did(&mut registry, &school, "Medical School", "inbox:school", &mut rng).unwrap();

    let license = CredentialSchema::new("gmc_license:1", &["full_name", "gmc_number", "license_status"]);
    register_schema(&mut registry, license.clone(), &gmc_did, &gmc, &mut rng).unwrap();
    let degree = CredentialSchema::new("medical_degree:1", &["full_name", "degree", "university"]);
    register_schema(&mut registry, degree, &school_did, &school, &mut rng).unwrap();

    for entry in registry.entries() {
        println!("#{} {:<16} by {}", entry.sequence_number, entry.payload.kind(), entry.author_did);
    }

    let doc = registry.resolve(&gmc_did).unwrap();
    println!("resolved {} -> label `{}`, inbox `{}`", gmc_did, doc.label, doc.inbox_id);
    println!("schema gmc_license:1 authored by {}", registry.schema_author("gmc_license:1").unwrap());

    // Someone else tries to publish a schema under the GMC's name.
    let impostor = keygen(params, &mut rng);
    let rival = CredentialSchema::new("gmc_license:2", &["gmc_number"]);
    let sig = EntryPayload::CredentialSchema(rival.clone()).sign(params, &gmc_did, &impostor, &mut rng);
    println!("impostor schema: {}", registry.publish_schema(rival, &gmc_did, sig).unwrap_err());

    // Re-publishing is rejected: the registry only appends.
    println!("republish schema: {}", register_schema(&mut registry, license, &gmc_did, &gmc, &mut rng).unwrap_err());
    let doc = DidDocument::for_key(gmc.public(), "GMC again", "inbox:other");
    let sig = EntryPayload::DidDocument(doc.clone()).sign(params, &doc.did, &gmc, &mut rng);
    println!("republish DID: {}", registry.publish_did(doc, sig).unwrap_err());

    let exported = registry.export_json();
    let copy = Registry::import_json(&exported).unwrap();
    println!("export is {} bytes; re-import holds {} entries", exported.len(), copy.len());
}
