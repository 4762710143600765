//! Time model and per-stage cost comparison between the manual process and
//! the wallet-based one.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::script::{MomentKind, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// Taken from published estimates of the manual process.
    Cited,
    /// A placeholder with no published estimate behind it.
    Assumed,
    /// A modelling parameter of this tool.
    Config,
    /// Set by the script for one moment.
    Script,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constant {
    pub name: String,
    pub value: f64,
    pub unit: String,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeModel {
    pub identity_check_days: f64,
    pub consultant_evidence_days: f64,
    pub induction_days_min: f64,
    pub induction_days_max: f64,
    pub occupational_health_days: f64,
    pub appraisal_days_per_cycle: f64,
    pub ssi_minutes_per_interaction: f64,
    pub working_hours_per_day: f64,
    /// Manual cost of moments outside onboarding and appraisal.
    pub other_baseline_days: BTreeMap<MomentKind, f64>,
}

impl Default for TimeModel {
    fn default() -> Self {
        let other_baseline_days = [
            (MomentKind::Graduation, 0.5),
            (MomentKind::GmcRegistration, 1.0),
            (MomentKind::JobApplication, 1.0),
            (MomentKind::Training, 0.25),
            (MomentKind::RcpeAccreditation, 1.0),
            (MomentKind::Qualification, 0.5),
            (MomentKind::MoveAbroad, 2.0),
        ]
        .into_iter()
        .collect();
        TimeModel {
            identity_check_days: 2.0,
            consultant_evidence_days: 1.0,
            induction_days_min: 1.0,
            induction_days_max: 2.0,
            occupational_health_days: 0.5,
            appraisal_days_per_cycle: 2.0,
            ssi_minutes_per_interaction: 2.0,
            working_hours_per_day: 8.0,
            other_baseline_days,
        }
    }
}

impl TimeModel {
    /// Identity check, consultant evidence, induction midpoint and
    /// occupational health.
    pub fn onboarding_days(&self) -> f64 {
        self.identity_check_days
            + self.consultant_evidence_days
            + (self.induction_days_min + self.induction_days_max) / 2.0
            + self.occupational_health_days
    }

    pub fn baseline(&self, kind: MomentKind) -> (f64, Source) {
        match kind {
            MomentKind::Rotation | MomentKind::JoinHospital => (self.onboarding_days(), Source::Cited),
            MomentKind::AppraisalRevalidation => (self.appraisal_days_per_cycle, Source::Cited),
            other => (self.other_baseline_days.get(&other).copied().unwrap_or(0.0), Source::Assumed),
        }
    }

    pub fn ssi_days(&self, interactions: u32) -> f64 {
        f64::from(interactions) * self.ssi_minutes_per_interaction / 60.0 / self.working_hours_per_day
    }

    pub fn constants(&self) -> Vec<Constant> {
        let c = |name: &str, value: f64, unit: &str, source: Source| Constant {
            name: name.to_string(),
            value,
            unit: unit.to_string(),
            source,
        };
        let mut out = vec![
            c("identity_check", self.identity_check_days, "days", Source::Cited),
            c("consultant_evidence", self.consultant_evidence_days, "days", Source::Cited),
            c("induction_min", self.induction_days_min, "days", Source::Cited),
            c("induction_max", self.induction_days_max, "days", Source::Cited),
            c("occupational_health", self.occupational_health_days, "days", Source::Assumed),
            c("appraisal_per_cycle", self.appraisal_days_per_cycle, "days", Source::Cited),
            c("ssi_per_interaction", self.ssi_minutes_per_interaction, "minutes", Source::Config),
            c("working_day", self.working_hours_per_day, "hours", Source::Config),
        ];
        for (kind, days) in &self.other_baseline_days {
            let name = serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
            out.push(c(&format!("baseline_{name}"), *days, "days", Source::Assumed));
        }
        out
    }
}

/// What the engine observed for one occurrence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccurrenceRecord {
    pub moment_id: String,
    pub kind: MomentKind,
    pub number: u32,
    pub day: i64,
    pub date: String,
    pub interactions: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_override: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub stage: Stage,
    pub label: String,
    pub occurrences: u32,
    pub interactions: u32,
    pub baseline_days: f64,
    pub ssi_days: f64,
    pub saved_days: f64,
    pub per_occurrence_baseline_days: f64,
    pub per_occurrence_ssi_days: f64,
    pub baseline_source: Source,
}

/// One bar of the career timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineRow {
    pub moment_id: String,
    pub stage: Stage,
    pub number: u32,
    pub start_day: i64,
    pub start_date: String,
    pub baseline_days: f64,
    pub ssi_days: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub interactions: u32,
    pub baseline_days: f64,
    pub ssi_days: f64,
    pub saved_days: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub constants: Vec<Constant>,
    pub rows: Vec<StageRow>,
    pub totals: Totals,
    pub timeline: Vec<TimelineRow>,
}

impl MetricsReport {
    pub fn row(&self, stage: Stage) -> &StageRow {
        self.rows.iter().find(|r| r.stage == stage).expect("every stage has a row")
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<28} {:>5} {:>6} {:>10} {:>9} {:>9}  source",
            "stage", "runs", "inter.", "baseline", "ssi", "saved"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<28} {:>5} {:>6} {:>10.3} {:>9.4} {:>9.3}  {:?}",
                r.label, r.occurrences, r.interactions, r.baseline_days, r.ssi_days, r.saved_days, r.baseline_source
            );
        }
        let t = &self.totals;
        let _ = writeln!(
            out,
            "{:<28} {:>5} {:>6} {:>10.3} {:>9.4} {:>9.3}",
            "total", "", t.interactions, t.baseline_days, t.ssi_days, t.saved_days
        );
        out
    }
}

/// Folds occurrence records into nine stage rows. Pure.
pub fn compute(records: &[OccurrenceRecord], model: &TimeModel) -> MetricsReport {
    let mut rows: Vec<StageRow> = Stage::ALL
        .iter()
        .map(|&stage| StageRow {
            stage,
            label: stage.label().to_string(),
            occurrences: 0,
            interactions: 0,
            baseline_days: 0.0,
            ssi_days: 0.0,
            saved_days: 0.0,
            per_occurrence_baseline_days: 0.0,
            per_occurrence_ssi_days: 0.0,
            baseline_source: stage_source(stage, model),
        })
        .collect();
    let mut timeline = Vec::with_capacity(records.len());
    let mut totals = Totals::default();
    for rec in records {
        let stage = rec.kind.stage();
        let (baseline, source) = match rec.baseline_override {
            Some(d) => (d, Source::Script),
            None => model.baseline(rec.kind),
        };
        let ssi = model.ssi_days(rec.interactions);
        let row = rows.iter_mut().find(|r| r.stage == stage).expect("stage row");
        if rec.kind != MomentKind::GmcRegistration {
            row.occurrences += 1;
        }
        if source == Source::Script {
            row.baseline_source = Source::Script;
        }
        row.interactions += rec.interactions;
        row.baseline_days += baseline;
        row.ssi_days += ssi;
        totals.interactions += rec.interactions;
        totals.baseline_days += baseline;
        totals.ssi_days += ssi;
        timeline.push(TimelineRow {
            moment_id: rec.moment_id.clone(),
            stage,
            number: rec.number,
            start_day: rec.day,
            start_date: rec.date.clone(),
            baseline_days: baseline,
            ssi_days: ssi,
        });
    }
    for row in &mut rows {
        row.saved_days = row.baseline_days - row.ssi_days;
        if row.occurrences > 0 {
            row.per_occurrence_baseline_days = row.baseline_days / f64::from(row.occurrences);
            row.per_occurrence_ssi_days = row.ssi_days / f64::from(row.occurrences);
        }
    }
    totals.saved_days = totals.baseline_days - totals.ssi_days;
    MetricsReport { constants: model.constants(), rows, totals, timeline }
}

fn stage_source(stage: Stage, model: &TimeModel) -> Source {
    let kind = match stage {
        Stage::Graduation => MomentKind::Graduation,
        Stage::JobApplication => MomentKind::JobApplication,
        Stage::JoinHospital => MomentKind::JoinHospital,
        Stage::Training => MomentKind::Training,
        Stage::Rotation => MomentKind::Rotation,
        Stage::RcpeAccreditation => MomentKind::RcpeAccreditation,
        Stage::Qualification => MomentKind::Qualification,
        Stage::MoveAbroad => MomentKind::MoveAbroad,
        Stage::AppraisalRevalidation => MomentKind::AppraisalRevalidation,
    };
    model.baseline(kind).1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(kind: MomentKind, interactions: u32) -> OccurrenceRecord {
        OccurrenceRecord {
            moment_id: "m".into(),
            kind,
            number: 1,
            day: 0,
            date: "2020-09-01".into(),
            interactions,
            baseline_override: None,
        }
    }

    #[test]
    fn rotation_row() {
        let m = compute(&[rec(MomentKind::Rotation, 4)], &TimeModel::default());
        let r = m.row(Stage::Rotation);
        assert_eq!(r.baseline_days, 5.0);
        assert!((r.ssi_days - 8.0 / 480.0).abs() < 1e-12);
        assert!((r.saved_days - (5.0 - 1.0 / 60.0)).abs() < 1e-12);
        assert_eq!(r.baseline_source, Source::Cited);
    }

    #[test]
    fn empty_input_gives_nine_zero_rows() {
        let m = compute(&[], &TimeModel::default());
        assert_eq!(m.rows.len(), 9);
        assert!(m.rows.iter().all(|r| r.baseline_days == 0.0 && r.ssi_days == 0.0 && r.occurrences == 0));
        assert_eq!(m.totals, Totals::default());
    }

    #[test]
    fn registration_folds_into_graduation() {
        let m = compute(&[rec(MomentKind::Graduation, 2), rec(MomentKind::GmcRegistration, 4)], &TimeModel::default());
        let r = m.row(Stage::Graduation);
        assert_eq!(r.occurrences, 1);
        assert_eq!(r.interactions, 6);
        assert_eq!(r.baseline_days, 1.5);
        assert_eq!(r.baseline_source, Source::Assumed);
    }

    #[test]
    fn script_override_is_labelled() {
        let mut r = rec(MomentKind::Training, 2);
        r.baseline_override = Some(3.0);
        let m = compute(&[r], &TimeModel::default());
        assert_eq!(m.row(Stage::Training).baseline_days, 3.0);
        assert_eq!(m.row(Stage::Training).baseline_source, Source::Script);
    }

    #[test]
    fn constants_carry_labels() {
        let c = TimeModel::default().constants();
        assert!(c.iter().any(|k| k.name == "occupational_health" && k.source == Source::Assumed));
        assert!(c.iter().any(|k| k.name == "identity_check" && k.source == Source::Cited));
    }
}
