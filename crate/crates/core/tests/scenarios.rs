//! Career runs end to end: contents, reports, determinism and failure modes.

mod common;

use std::collections::BTreeSet;
use std::fs;

use cpx::crypto::GroupParams;
use cpx::scenario::config::{DOCTOR, EDINBURGH, GLASGOW};
use cpx::scenario::script::{AttributeSpec, Moment, RestrictionSpec};
use cpx::scenario::{
    inject_consent_violation, run_principles_checks, run_scenario, EcosystemConfig, MomentKind, PrincipleOptions,
    ScenarioError, ScenarioScript, Stage, Status, Step, TimeModel,
};

#[test]
fn default_career_fills_the_wallet() {
    let run = common::default_run(GroupParams::production(), common::RUN_SEED);
    let schemas: BTreeSet<&str> = run.trace.inventory.credentials.iter().map(|c| c.schema_id.as_str()).collect();
    for required in [
        "medical_degree:1",
        "gmc_license:1",
        "identity_verification:1",
        "employment:1",
        "training_record:1",
        "rcpe_accreditation:1",
        "qualified_physician:1",
    ] {
        assert!(schemas.contains(required), "missing {required}");
    }
    assert!(run.trace.inventory.credentials.len() >= 6);
    assert!(run.principles.machine_checkable_pass, "failing: {:?}", run.principles.failing());
}

#[test]
fn every_moment_kind_is_exercised() {
    let run = common::default_run(GroupParams::toy(), 5);
    let kinds: BTreeSet<MomentKind> = run.trace.occurrences.iter().map(|o| o.kind).collect();
    assert_eq!(kinds.len(), 10, "{kinds:?}");
}

#[test]
fn rotation_reuses_the_edinburgh_identity_check() {
    let run = common::default_run(GroupParams::production(), common::RUN_SEED);
    let edinburgh = run.ecosystem().agent(EDINBURGH).unwrap().public_did.clone().unwrap();
    let rotations: Vec<_> = run
        .trace
        .verifications
        .iter()
        .filter(|v| {
            v.verifier == GLASGOW
                && v.record.request.requested.iter().any(|r| r.restriction.issuer_did.as_ref() == Some(&edinburgh))
        })
        .collect();
    assert_eq!(rotations.len(), 5);
    for v in rotations {
        assert!(v.record.result.accepted);
        let sources: Vec<&str> =
            v.record.presentation.sources.iter().map(|s| s.body.schema_id.as_str()).collect();
        assert!(sources.contains(&"identity_verification:1"), "{sources:?}");
    }
    let identity_checks = run
        .trace
        .inventory
        .credentials
        .iter()
        .filter(|c| c.schema_id == "identity_verification:1")
        .count();
    assert_eq!(identity_checks, 1, "Glasgow never repeats the identity check");
}

#[test]
fn rotation_metrics_recompute_from_the_model() {
    let model = TimeModel::default();
    let run = common::default_run(GroupParams::toy(), 5);
    let row = run.trace.metrics.row(Stage::Rotation);
    let baseline = model.identity_check_days
        + model.consultant_evidence_days
        + (model.induction_days_min + model.induction_days_max) / 2.0
        + model.occupational_health_days;
    let ssi = 4.0 * model.ssi_minutes_per_interaction / 60.0 / model.working_hours_per_day;
    assert_eq!(row.per_occurrence_baseline_days, baseline);
    assert_eq!(row.per_occurrence_ssi_days, ssi);
    assert!(baseline >= 4.0 && ssi <= 0.02);
    assert!((baseline - ssi - 4.983_333_333_333_333).abs() < 1e-12);
    assert_eq!(row.occurrences, 5);
    assert_eq!(row.baseline_days, 5.0 * baseline);
}

#[test]
fn metrics_totals_and_benefit_hold() {
    let run = common::default_run(GroupParams::toy(), 5);
    let m = &run.trace.metrics;
    assert_eq!(m.rows.len(), 9);
    let sum = |f: fn(&cpx::scenario::StageRow) -> f64| m.rows.iter().map(f).sum::<f64>();
    assert!((m.totals.baseline_days - sum(|r| r.baseline_days)).abs() < 1e-9);
    assert!((m.totals.ssi_days - sum(|r| r.ssi_days)).abs() < 1e-9);
    assert_eq!(m.totals.interactions, m.rows.iter().map(|r| r.interactions).sum::<u32>());
    for r in &m.rows {
        assert!(r.saved_days >= 0.0, "{:?}", r.stage);
        assert!((r.saved_days - (r.baseline_days - r.ssi_days)).abs() < 1e-12);
    }
    let appraisal = m.row(Stage::AppraisalRevalidation);
    assert_eq!(appraisal.occurrences, 3);
    assert_eq!(appraisal.baseline_days, 6.0);
    assert_eq!(m.timeline.len(), run.trace.occurrences.len());
}

#[test]
fn nine_year_horizon_gives_three_appraisals() {
    let script = ScenarioScript::default_career();
    assert_eq!(script.career_years, 9);
    let days: Vec<i64> = script
        .occurrences()
        .iter()
        .filter(|o| script.moments[o.moment_index].kind == MomentKind::AppraisalRevalidation)
        .map(|o| o.day)
        .collect();
    assert_eq!(days, vec![1095, 2190, 3285]);
}

#[test]
fn same_seed_gives_byte_identical_exports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    common::default_run(GroupParams::toy(), 31).write_dir(a.path()).unwrap();
    common::default_run(GroupParams::toy(), 31).write_dir(b.path()).unwrap();
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 7);
    for name in names {
        assert_eq!(fs::read(a.path().join(&name)).unwrap(), fs::read(b.path().join(&name)).unwrap(), "{name:?}");
    }
}

#[test]
fn different_seeds_give_different_keys_but_the_same_metrics() {
    let a = common::default_run(GroupParams::toy(), 1);
    let b = common::default_run(GroupParams::toy(), 2);
    assert_ne!(a.trace.registry_json, b.trace.registry_json);
    assert_eq!(a.trace.metrics, b.trace.metrics);
}

#[test]
fn injected_consent_violation_flips_only_consent() {
    let mut run = common::default_run(GroupParams::production(), common::RUN_SEED);
    let opts = PrincipleOptions { seed: common::RUN_SEED, ..PrincipleOptions::default() };
    let clean = run_principles_checks(&run.trace, run.ecosystem(), &opts);
    assert!(clean.machine_checkable_pass);
    assert!(inject_consent_violation(&mut run.trace));
    let doctored = run_principles_checks(&run.trace, run.ecosystem(), &opts);
    let changed: Vec<&str> = clean
        .rows
        .iter()
        .zip(&doctored.rows)
        .filter(|(a, b)| a.status != b.status)
        .map(|(a, _)| a.principle.as_str())
        .collect();
    assert_eq!(changed, vec!["Consent"]);
    let row = doctored.row("Consent").unwrap();
    assert_eq!(row.status, Status::Fail);
    assert!(row.evidence.contains("messages.jsonl#"), "{}", row.evidence);
}

#[test]
fn principles_are_ordered_by_priority() {
    let run = common::default_run(GroupParams::toy(), 5);
    let rows = &run.principles.rows;
    let mut groups: Vec<&str> = Vec::new();
    for r in rows {
        if groups.last() != Some(&r.group.as_str()) {
            groups.push(&r.group);
        }
    }
    assert_eq!(&groups[..3], &["Protection", "Control & Consent", "Interoperability"]);
    assert_eq!(rows[0].principle, "Protection");
    assert!(rows.iter().enumerate().all(|(i, r)| r.rank == i + 1));
    let unchecked: Vec<_> = rows.iter().filter(|r| r.status == Status::NotMachineCheckable).collect();
    assert!(unchecked.iter().any(|r| r.principle == "Dignity"));
    assert!(unchecked.iter().all(|r| r.check_id.is_none()));
}

#[test]
fn unknown_schema_fails_at_first_use() {
    let mut script = ScenarioScript::empty("typo");
    script.career_years = 1;
    script.moments.push(Moment {
        moment_id: "graduation".into(),
        kind: MomentKind::Graduation,
        day: 0,
        recurrence: None,
        baseline_cost_days: None,
        steps: vec![
            Step::Connect { with: "Medical School".into(), mode: Default::default() },
            Step::Issue { issuer: "Medical School".into(), schema_id: "medical_degre:1".into(), values: Default::default() },
        ],
    });
    let err = run_scenario(&EcosystemConfig::default(), &script, GroupParams::toy(), 1, &TimeModel::default())
        .err()
        .expect("run fails");
    match err {
        ScenarioError::StepFailed { moment_id, step_index, action, .. } => {
            assert_eq!((moment_id.as_str(), step_index, action.as_str()), ("graduation", 1, "issue"));
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn request_for_a_missing_credential_halts_at_present() {
    let mut script = ScenarioScript::empty("unprepared");
    script.career_years = 1;
    script.moments.push(Moment {
        moment_id: "rotation".into(),
        kind: MomentKind::Rotation,
        day: 0,
        recurrence: None,
        baseline_cost_days: None,
        steps: vec![
            Step::Connect { with: GLASGOW.into(), mode: Default::default() },
            Step::RequestProof {
                verifier: GLASGOW.into(),
                attributes: vec![AttributeSpec {
                    name: "gmc_number".into(),
                    restriction: RestrictionSpec { schema_id: Some("gmc_license:1".into()), issuer: None },
                }],
                expiry_days: None,
            },
            Step::Present { selection: Default::default(), consent: None },
        ],
    });
    let err = run_scenario(&EcosystemConfig::default(), &script, GroupParams::toy(), 1, &TimeModel::default())
        .err()
        .expect("run fails");
    assert!(matches!(err, ScenarioError::StepFailed { step_index: 2, .. }), "{err}");
}

#[test]
fn scripts_and_configs_survive_json() {
    let script = ScenarioScript::default_career();
    assert_eq!(ScenarioScript::from_json(&script.to_json()).unwrap(), script);
    let config = EcosystemConfig::default();
    let json = serde_json::to_string(&config).unwrap();
    assert_eq!(EcosystemConfig::from_json(&json).unwrap(), config);
    assert!(matches!(ScenarioScript::from_json("{\"version\":\"cpx-script/0\"}"), Err(ScenarioError::ScriptInvalid(_))));
}

#[test]
fn time_model_overrides_flow_into_the_report() {
    let model = TimeModel { ssi_minutes_per_interaction: 4.0, occupational_health_days: 0.0, ..TimeModel::default() };
    let run = run_scenario(
        &EcosystemConfig::default(),
        &ScenarioScript::rotation_only(),
        GroupParams::toy(),
        3,
        &model,
    )
    .unwrap();
    let row = run.trace.metrics.row(Stage::Rotation);
    assert_eq!(row.per_occurrence_baseline_days, 4.5);
    assert_eq!(row.per_occurrence_ssi_days, 16.0 / 480.0);
}

#[test]
fn holder_has_no_public_identity() {
    let run = common::default_run(GroupParams::toy(), 5);
    let doctor = run.ecosystem().agent(DOCTOR).unwrap();
    assert!(doctor.public_did.is_none());
    assert!(run.trace.inventory.connections.iter().all(|c| c.my_peer_did.is_peer()));
}
