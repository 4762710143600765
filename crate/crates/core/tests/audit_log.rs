//! Audit chain integrity over a real career log.

mod common;

use cpx::audit::{export_jsonl, import_jsonl, trace_credential, verify_chain, AuditError, ChainStatus, EventType};
use cpx::crypto::GroupParams;

#[test]
fn every_field_mutation_is_located_exactly() {
    let mut run = common::default_run(GroupParams::toy(), 9);
    common::grow_audit_log(&mut run.runner.eco, 100);
    let events = run.ecosystem().audit.events()[..100].to_vec();
    assert_eq!(verify_chain(&events), ChainStatus::Ok);

    let cases = common::field_mutations(&events);
    assert_eq!(cases.len(), 100 * 11);
    for (index, field, log) in &cases {
        assert_eq!(common::broken_at(verify_chain(log)), Some(*index), "field {field} at {index}");
    }
}

#[test]
fn dropping_or_reordering_events_breaks_the_chain() {
    let run = common::default_run(GroupParams::toy(), 9);
    let events = run.trace.audit.clone();
    let mut dropped = events.clone();
    dropped.remove(10);
    assert_eq!(verify_chain(&dropped), ChainStatus::Broken(10));
    let mut swapped = events.clone();
    swapped.swap(20, 21);
    assert_eq!(verify_chain(&swapped), ChainStatus::Broken(20));
    assert_eq!(verify_chain(&events[..events.len() - 3]), ChainStatus::Ok, "a prefix is still a valid chain");
}

#[test]
fn license_history_is_issue_then_presentations_then_revocation() {
    let mut run = common::default_run(GroupParams::production(), common::RUN_SEED);
    let license = common::grow_audit_log(&mut run.runner.eco, 0);
    let history = trace_credential(run.ecosystem().audit.events(), &license).unwrap();
    let kinds: Vec<EventType> = history.iter().map(|e| e.event_type).collect();
    assert_eq!(kinds.first(), Some(&EventType::Issued));
    assert_eq!(kinds.last(), Some(&EventType::Revoked));
    let verified = kinds.iter().filter(|k| **k == EventType::Verified).count();
    assert!(verified >= 2, "license presented more than once: {kinds:?}");
    assert!(history.windows(2).all(|w| w[0].index < w[1].index));
}

#[test]
fn jsonl_round_trip_and_refusal_on_broken_chain() {
    let run = common::default_run(GroupParams::toy(), 9);
    let text = export_jsonl(&run.trace.audit);
    let back = import_jsonl(&text).unwrap();
    assert_eq!(back, run.trace.audit);
    assert_eq!(export_jsonl(&back), text, "export is canonical");

    let mut broken = back.clone();
    broken[4].payload.outcome = Some("rewritten".into());
    let id = back.iter().find_map(|e| e.payload.credential_ids.first().copied()).unwrap();
    assert_eq!(trace_credential(&broken, &id), Err(AuditError::ChainBroken(4)));
    assert!(matches!(import_jsonl("{not json"), Err(AuditError::Parse { line: 1, .. })));
}
