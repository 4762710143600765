//! Acceptance run: one line per criterion, non-zero exit if any fails.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::time::{Duration, Instant};

use common::ToyOracle;
use cpx::audit::{trace_credential, verify_chain, ChainStatus, EventType};
use cpx::crypto::GroupParams;
use cpx::scenario::{inject_consent_violation, run_principles_checks, PrincipleOptions, ScenarioScript, Stage, TimeModel};

const MIN_CREDENTIALS: usize = 6;
const MAX_RUN: Duration = Duration::from_secs(10);
const TAMPER_TRIALS: usize = 1000;
const THEFT_ATTEMPTS: usize = 1000;
const ORACLE_INSTANCES: usize = 100;
const MAX_ORACLES: Duration = Duration::from_secs(60);
const AUDIT_EVENTS: usize = 100;
const ROTATION_BASELINE_MIN: f64 = 4.0;
const ROTATION_SSI_MAX: f64 = 0.02;
const EXACT: f64 = 1e-12;

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn default_career() -> Outcome {
    let start = Instant::now();
    let run = common::default_run(GroupParams::production(), common::RUN_SEED);
    let elapsed = start.elapsed();
    let held = run.trace.inventory.credentials.len();
    (
        held >= MIN_CREDENTIALS && elapsed < MAX_RUN && run.principles.machine_checkable_pass,
        format!("{held} credentials held (min {MIN_CREDENTIALS}), {elapsed:.2?} (max {MAX_RUN:?})"),
    )
}

fn tampering() -> Outcome {
    let run = common::default_run(GroupParams::production(), common::RUN_SEED);
    let t = common::tamper_suite(&run, TAMPER_TRIALS, 77);
    (
        t.accepted == 0 && t.trials == TAMPER_TRIALS,
        format!(
            "{} mutants, {} accepted ({} undecodable, {} rejected by checks)",
            t.trials, t.accepted, t.undecodable, t.rejected
        ),
    )
}

fn replay() -> Outcome {
    let mut run = common::default_run(GroupParams::production(), common::RUN_SEED);
    let t = common::replay_suite(&mut run);
    (
        t.replayed > 0 && t.nonce_failed == t.replayed && t.accepted == 0,
        format!("{}/{} replays failed the nonce check, {} accepted", t.nonce_failed, t.replayed, t.accepted),
    )
}

fn theft() -> Outcome {
    let t = common::theft_suite(GroupParams::production(), THEFT_ATTEMPTS, 3);
    (
        t.accepted == 0 && t.attempts == THEFT_ATTEMPTS,
        format!("{} attempts, {} accepted, {} failed only the link check", t.attempts, t.accepted, t.link_only),
    )
}

fn minimal_disclosure() -> Outcome {
    let run = common::default_run(GroupParams::production(), common::RUN_SEED);
    let mut checked = 0;
    let mut mismatched = 0;
    for v in run.trace.verifications.iter().filter(|v| v.record.result.accepted) {
        let requested: BTreeSet<String> = v.record.request.requested.iter().map(|r| r.name.clone()).collect();
        let disclosed: Vec<String> = v.record.presentation.disclosed_pairs().into_iter().map(|(n, _)| n).collect();
        let unique: BTreeSet<String> = disclosed.iter().cloned().collect();
        let revealed: BTreeSet<String> = v.record.result.disclosed_values.keys().cloned().collect();
        checked += 1;
        if unique != requested || disclosed.len() != requested.len() || revealed != requested {
            mismatched += 1;
        }
    }
    (checked > 0 && mismatched == 0, format!("{checked} accepted presentations, {mismatched} with extra or missing attributes"))
}

fn toy_oracles() -> Outcome {
    let start = Instant::now();
    let o = ToyOracle::new();
    let tallies = [
        ("schnorr", common::schnorr_oracle(&o, ORACLE_INSTANCES, 11)),
        ("commitment", common::commitment_oracle(&o, ORACLE_INSTANCES, 12)),
        ("equal-secret", common::equal_secret_oracle(&o, ORACLE_INSTANCES, 13)),
        ("opening", common::opening_oracle(&o, ORACLE_INSTANCES, 14)),
    ];
    let elapsed = start.elapsed();
    let ok = tallies.iter().all(|(_, t)| t.instances >= ORACLE_INSTANCES && t.disagreements == 0);
    let detail: Vec<String> =
        tallies.iter().map(|(n, t)| format!("{n} {}/{} disagree", t.disagreements, t.instances)).collect();
    (ok && elapsed < MAX_ORACLES, format!("{}; {elapsed:.2?} (max {MAX_ORACLES:?})", detail.join(", ")))
}

fn audit_integrity() -> Outcome {
    let mut run = common::default_run(GroupParams::production(), common::RUN_SEED);
    let license = common::grow_audit_log(&mut run.runner.eco, AUDIT_EVENTS);
    let events = run.ecosystem().audit.events().to_vec();
    let prefix = &events[..AUDIT_EVENTS];
    let cases = common::field_mutations(prefix);
    let located = cases.iter().filter(|(i, _, log)| common::broken_at(verify_chain(log)) == Some(*i)).count();
    let kinds: Vec<EventType> = trace_credential(&events, &license)
        .map(|h| h.iter().map(|e| e.event_type).collect())
        .unwrap_or_default();
    let history_ok = kinds.first() == Some(&EventType::Issued)
        && kinds.last() == Some(&EventType::Revoked)
        && kinds.contains(&EventType::Verified);
    (
        verify_chain(prefix) == ChainStatus::Ok && located == cases.len() && history_ok,
        format!(
            "{located}/{} single-field edits located at the edited index; license history {}",
            cases.len(),
            kinds.iter().map(|k| format!("{k:?}")).collect::<Vec<_>>().join(">")
        ),
    )
}

fn rotation_savings() -> Outcome {
    let model = TimeModel::default();
    let run = common::default_run(GroupParams::production(), common::RUN_SEED);
    let row = run.trace.metrics.row(Stage::Rotation);
    let expect_baseline = model.identity_check_days
        + model.consultant_evidence_days
        + (model.induction_days_min + model.induction_days_max) / 2.0
        + model.occupational_health_days;
    let expect_ssi = 4.0 * model.ssi_minutes_per_interaction / 60.0 / model.working_hours_per_day;
    let appraisals: Vec<i64> = {
        let script = ScenarioScript::default_career();
        script
            .occurrences()
            .iter()
            .filter(|o| script.moments[o.moment_index].kind == cpx::scenario::MomentKind::AppraisalRevalidation)
            .map(|o| o.day)
            .collect()
    };
    let b = row.per_occurrence_baseline_days;
    let s = row.per_occurrence_ssi_days;
    let ok = b >= ROTATION_BASELINE_MIN
        && s <= ROTATION_SSI_MAX
        && (b - expect_baseline).abs() < EXACT
        && (s - expect_ssi).abs() < EXACT
        && appraisals.len() == 3
        && run.trace.metrics.row(Stage::AppraisalRevalidation).occurrences == 3;
    (
        ok,
        format!(
            "rotation {b} days before, {s:.5} days after (min {ROTATION_BASELINE_MIN}, max {ROTATION_SSI_MAX}), {:.5} saved; appraisals on days {appraisals:?}",
            b - s
        ),
    )
}

fn principles() -> Outcome {
    let mut run = common::default_run(GroupParams::production(), common::RUN_SEED);
    let opts = PrincipleOptions { seed: common::RUN_SEED, ..PrincipleOptions::default() };
    let clean = run_principles_checks(&run.trace, run.ecosystem(), &opts);
    let mut groups: Vec<String> = Vec::new();
    for r in &clean.rows {
        if groups.last() != Some(&r.group) {
            groups.push(r.group.clone());
        }
    }
    let ordered = groups.len() >= 3 && groups[..3] == ["Protection", "Control & Consent", "Interoperability"];
    let injected = inject_consent_violation(&mut run.trace);
    let doctored = run_principles_checks(&run.trace, run.ecosystem(), &opts);
    let flipped: Vec<&str> = clean
        .rows
        .iter()
        .zip(&doctored.rows)
        .filter(|(a, b)| a.status != b.status)
        .map(|(a, _)| a.principle.as_str())
        .collect();
    (
        clean.machine_checkable_pass && injected && flipped == ["Consent"] && ordered,
        format!(
            "clean run {}; injected violation flips {flipped:?}; first groups {:?}",
            if clean.machine_checkable_pass { "passes" } else { "fails" },
            &groups[..groups.len().min(3)]
        ),
    )
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let written = [&a, &b]
        .iter()
        .all(|d| common::default_run(GroupParams::production(), common::RUN_SEED).write_dir(d.path()).is_ok());
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let differing: Vec<String> = names
        .iter()
        .filter(|n| fs::read(a.path().join(n)).ok() != fs::read(b.path().join(n)).ok())
        .map(|n| n.to_string_lossy().into_owned())
        .collect();
    (
        written && !names.is_empty() && differing.is_empty(),
        format!("{} artifacts compared, differing: {differing:?}", names.len()),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("default career on the production group", default_career),
        ("tampered artifacts rejected", tampering),
        ("replayed presentations rejected", replay),
        ("stolen credentials unusable", theft),
        ("disclosed set equals requested set", minimal_disclosure),
        ("toy group oracles agree", toy_oracles),
        ("audit chain locates edits", audit_integrity),
        ("rotation time savings", rotation_savings),
        ("principle checks", principles),
        ("seeded runs are byte-identical", determinism),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let (ok, detail) = check();
        if !ok {
            failed += 1;
        }
        println!("criterion {}: {} {name}: {detail}", n + 1, if ok { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {}/{} passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
