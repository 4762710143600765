//! A hospital invites a doctor; the two end up with a private pair of peer
//! DIDs and a signed, ordered message channel.
//!
//! `cargo run --example peer_connection`

use cpx::connections::{
    accept_invitation, complete_invitation, create_invitation, payload_types, receive, send, FormationMode,
};
use cpx::crypto::{keygen, GroupParams};
use cpx::registry::{register_did, Registry};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() {
    let params = GroupParams::production();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let mut registry = Registry::new(params);
    let hospital = keygen(params, &mut rng);
    let hospital_did = register_did(&mut registry, &hospital, "Edinburgh Hospital", "inbox:edinburgh", &mut rng).unwrap();
    let entries_before = registry.len();

    let pending = create_invitation(
        params,
        "inbox:edinburgh",
        "Edinburgh Hospital",
        Some((&hospital_did, &hospital)),
        FormationMode::FaceToFace,
        &mut rng,
    );
    let invitation = pending.invitation.clone();
    let (mut doctor, response) =
        accept_invitation(params, &registry, &invitation, "inbox:doctor", "Doctor", &mut rng).unwrap();
    let mut hospital_end = complete_invitation(params, pending, &response).unwrap();

    println!("doctor sees   {} (anchor {:?})", doctor.their_peer_did, doctor.their_public_did.as_ref().map(|d| d.as_str()));
    println!("hospital sees {}", hospital_end.their_peer_did);
    println!("registry entries added by connecting: {}", registry.len() - entries_before);

    let first = send(params, &mut hospital_end, payload_types::ACK, b"welcome".to_vec(), &mut rng).unwrap();
    let second = send(params, &mut hospital_end, payload_types::ACK, b"induction".to_vec(), &mut rng).unwrap();
    println!("seq {} -> {:?}", first.seq, String::from_utf8(receive(params, &mut doctor, &first).unwrap()).unwrap());
    println!("replay of seq {}: {}", first.seq, receive(params, &mut doctor, &first).unwrap_err());

    let mut forged = second.clone();
    forged.payload = b"induction waived".to_vec();
    println!("altered payload: {}", receive(params, &mut doctor, &forged).unwrap_err());
    println!("seq {} -> {:?}", second.seq, String::from_utf8(receive(params, &mut doctor, &second).unwrap()).unwrap());

    // An invitation whose anchor signature came from a different key.
    let stranger = keygen(params, &mut rng);
    let spoof = create_invitation(
        params,
        "inbox:fake",
        "Edinburgh Hospital",
        Some((&hospital_did, &stranger)),
        FormationMode::Website,
        &mut rng,
    );
    let err = accept_invitation(params, &registry, &spoof.invitation, "inbox:doctor", "Doctor", &mut rng).unwrap_err();
    println!("spoofed anchor: {err}");
}
