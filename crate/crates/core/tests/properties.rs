//! Property tests for the encoding, arithmetic, audit chain, metrics and
//! disclosure invariants.

mod common;

use std::collections::BTreeMap;

use cpx::agents::ProofAnswer;
use cpx::audit::{verify_chain, AuditLog, ChainStatus, EventPayload, EventType};
use cpx::clock::{SimClock, Timestamp};
use cpx::connections::FormationMode;
use cpx::crypto::{attribute_digest, keygen_seeded, sign, verify_sig, GroupParams};
use cpx::encoding::Value;
use cpx::ids::CredentialId;
use cpx::presentation::{AttributeRestriction, RequestedAttribute};
use cpx::registry::Did;
use cpx::scenario::config::{DOCTOR, GLASGOW, MEDICAL_SCHOOL};
use cpx::scenario::metrics::{compute, OccurrenceRecord};
use cpx::scenario::script::Recurrence;
use cpx::scenario::{setup_ecosystem, EcosystemConfig, MomentKind, ScenarioScript, Stage, TimeModel};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn value_tree() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        proptest::collection::vec(any::<u8>(), 0..24).prop_map(Value::Bytes),
        any::<u64>().prop_map(Value::Uint),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            proptest::collection::vec(inner.clone(), 0..4).prop_map(Value::List),
            proptest::collection::btree_map("[a-z_]{1,8}", inner, 0..4).prop_map(Value::Map),
        ]
    })
}

const KINDS: [MomentKind; 10] = [
    MomentKind::Graduation,
    MomentKind::GmcRegistration,
    MomentKind::JobApplication,
    MomentKind::JoinHospital,
    MomentKind::Training,
    MomentKind::Rotation,
    MomentKind::RcpeAccreditation,
    MomentKind::Qualification,
    MomentKind::MoveAbroad,
    MomentKind::AppraisalRevalidation,
];

proptest! {
    #[test]
    fn canonical_encoding_round_trips(v in value_tree()) {
        let bytes = v.encode();
        prop_assert_eq!(Value::decode(&bytes).unwrap(), v);
    }

    #[test]
    fn encoding_is_injective(a in value_tree(), b in value_tree()) {
        prop_assert_eq!(a == b, a.encode() == b.encode());
    }

    #[test]
    fn toy_scalar_arithmetic_matches_integers(a in 0u64..101, b in 0u64..101) {
        let p = GroupParams::toy();
        let num = |s: cpx::crypto::Scalar| s.value().to_string().parse::<u64>().unwrap();
        prop_assert_eq!(num(p.scalar_add(&p.scalar_from_u64(a), &p.scalar_from_u64(b))), (a + b) % 101);
        prop_assert_eq!(num(p.scalar_sub(&p.scalar_from_u64(a), &p.scalar_from_u64(b))), (a + 101 - b) % 101);
        prop_assert_eq!(num(p.scalar_mul(&p.scalar_from_u64(a), &p.scalar_from_u64(b))), a * b % 101);
    }

    #[test]
    fn group_law_holds_in_toy_group(a in 0u64..101, b in 0u64..101) {
        let p = GroupParams::toy();
        let (sa, sb) = (p.scalar_from_u64(a), p.scalar_from_u64(b));
        prop_assert_eq!(p.mul(&p.exp_g(&sa), &p.exp_g(&sb)), p.exp_g(&p.scalar_add(&sa, &sb)));
        let ga = p.exp_g(&sa);
        prop_assert_eq!(p.mul(&ga, &p.inverse(&ga)), p.identity());
        prop_assert!(p.contains(&ga));
    }

    #[test]
    fn digests_separate_name_value_and_salt(
        name in "[a-z_]{1,10}", value in ".{0,20}", other in ".{0,20}", salt in any::<[u8; 16]>()
    ) {
        let d = attribute_digest(&salt, &name, &value);
        prop_assert_eq!(d, attribute_digest(&salt, &name, &value));
        if other != value {
            prop_assert_ne!(d, attribute_digest(&salt, &name, &other));
        }
        let mut salt2 = salt;
        salt2[0] ^= 1;
        prop_assert_ne!(d, attribute_digest(&salt2, &name, &value));
        // Moving a character between name and value changes the digest.
        if !value.is_empty() {
            let shifted = format!("{name}{value}");
            prop_assert_ne!(d, attribute_digest(&salt, &shifted, ""));
        }
    }

    #[test]
    fn timestamps_move_by_whole_days(days in 0i64..20_000) {
        let t = SimClock::default().now();
        let later = t.plus_days(days);
        prop_assert_eq!(later.unix() - t.unix(), days * 86_400);
        prop_assert_eq!(Timestamp::parse_iso(&later.to_iso()).unwrap(), later);
    }

    #[test]
    fn audit_chain_flags_the_first_altered_event(
        n in 1usize..40, which in any::<prop::sample::Index>(), note in "[a-z]{1,8}"
    ) {
        let mut log = AuditLog::new();
        let actor = Did::new("did:cpx:actor");
        let mut clock = SimClock::default();
        for i in 0..n {
            let payload = EventPayload::credential(CredentialId([i as u8; 16])).with_note(format!("e{i}"));
            log.append(clock.tick(), &actor, EventType::Issued, payload);
        }
        prop_assert_eq!(log.verify(), ChainStatus::Ok);
        let k = which.index(n);
        let mut events = log.events().to_vec();
        events[k].payload.note = Some(format!("{note}!"));
        prop_assert_eq!(verify_chain(&events), ChainStatus::Broken(k as u64));
    }

    #[test]
    fn metrics_totals_are_row_sums(
        picks in proptest::collection::vec((0usize..10, 0u32..8), 0..30)
    ) {
        let model = TimeModel::default();
        let records: Vec<OccurrenceRecord> = picks
            .iter()
            .enumerate()
            .map(|(i, (k, n))| OccurrenceRecord {
                moment_id: format!("m{k}"),
                kind: KINDS[*k],
                number: i as u32 + 1,
                day: i as i64,
                date: String::new(),
                interactions: *n,
                baseline_override: None,
            })
            .collect();
        let report = compute(&records, &model);
        prop_assert_eq!(report.rows.len(), 9);
        let baseline: f64 = report.rows.iter().map(|r| r.baseline_days).sum();
        let ssi: f64 = report.rows.iter().map(|r| r.ssi_days).sum();
        prop_assert!((report.totals.baseline_days - baseline).abs() < 1e-9);
        prop_assert!((report.totals.ssi_days - ssi).abs() < 1e-9);
        let interactions: u32 = picks.iter().map(|(_, n)| n).sum();
        prop_assert_eq!(report.totals.interactions, interactions);
        prop_assert!((report.totals.ssi_days - model.ssi_days(interactions)).abs() < 1e-9);
        for r in &report.rows {
            prop_assert!(r.saved_days >= 0.0, "{:?}", r.stage);
        }
        if records.is_empty() {
            prop_assert_eq!(report.totals.baseline_days, 0.0);
        }
    }

    #[test]
    fn recurrences_expand_to_the_expected_count(
        start in 0i64..400, every in 1i64..400, years in 1u32..12, until in proptest::option::of(0i64..5000)
    ) {
        let mut script = ScenarioScript::default_career();
        script.career_years = years;
        let mut m = script.moments.iter().find(|m| m.kind == MomentKind::Training).unwrap().clone();
        m.day = start;
        m.recurrence = Some(Recurrence { every_days: every, until_day: until });
        script.moments = vec![m];
        let last = until.unwrap_or(script.horizon_days()).min(script.horizon_days());
        let expected = if last < start { 0 } else { ((last - start) / every + 1) as usize };
        let occ = script.occurrences();
        prop_assert_eq!(occ.len(), expected);
        prop_assert!(occ.windows(2).all(|w| w[0].day < w[1].day && w[1].number == w[0].number + 1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn signatures_bind_the_message(seed in any::<u64>(), msg in proptest::collection::vec(any::<u8>(), 0..64), flip in any::<prop::sample::Index>()) {
        let params = GroupParams::production();
        let keys = keygen_seeded(params, seed);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let sig = sign(params, &keys, &msg, &mut rng);
        prop_assert!(verify_sig(params, keys.public(), &msg, &sig));
        let mut other = msg.clone();
        if other.is_empty() {
            other.push(0);
        } else {
            let i = flip.index(other.len());
            other[i] ^= 0x80;
        }
        prop_assert!(!verify_sig(params, keys.public(), &other, &sig));
    }

    #[test]
    fn disclosed_set_equals_requested_set(mask in 1u8..32, seed in 0u64..1000) {
        let names = ["full_name", "date_of_birth", "degree", "university", "graduation_date"];
        let mut eco = setup_ecosystem(&EcosystemConfig::default(), GroupParams::production(), seed).unwrap();
        eco.connect(MEDICAL_SCHOOL, DOCTOR, FormationMode::FaceToFace).unwrap();
        let values: BTreeMap<String, String> = names.iter().map(|n| (n.to_string(), format!("v-{n}"))).collect();
        eco.issue_credential(MEDICAL_SCHOOL, DOCTOR, "medical_degree:1", &values).unwrap();
        eco.connect(GLASGOW, DOCTOR, FormationMode::Website).unwrap();
        let wanted: Vec<&str> = names.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, n)| *n).collect();
        let requested = wanted.iter().map(|n| RequestedAttribute::new(n, AttributeRestriction::schema("medical_degree:1"))).collect();
        let request = eco.prepare_proof_request(GLASGOW, requested, None).unwrap();
        let ProofAnswer::Presented(p) = eco.answer_proof_request(DOCTOR, &request).unwrap() else {
            return Err(TestCaseError::fail("no presentation"));
        };
        let mut disclosed: Vec<String> = p.disclosed_pairs().into_iter().map(|(n, _)| n).collect();
        disclosed.sort();
        let mut expected: Vec<String> = wanted.iter().map(|s| s.to_string()).collect();
        expected.sort();
        prop_assert_eq!(disclosed, expected);
        let result = eco.verify_presentation(GLASGOW, &p).unwrap();
        prop_assert!(result.accepted);
        prop_assert_eq!(result.disclosed_values.len(), wanted.len());
    }
}

#[test]
fn stage_labels_are_distinct() {
    let labels: std::collections::BTreeSet<&str> = Stage::ALL.iter().map(|s| s.label()).collect();
    assert_eq!(labels.len(), Stage::ALL.len());
}
