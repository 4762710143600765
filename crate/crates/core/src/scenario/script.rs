//! Career scripts: dated identity moments, each a list of protocol steps.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::config::{DOCTOR, EDINBURGH, GLASGOW, GMC, HES, MEDICAL_SCHOOL, RCPE};
use super::ScenarioError;
use crate::agents::{Decision, SelectionChoice};
use crate::connections::FormationMode;

pub const SCRIPT_VERSION: &str = "cpx-script/1";
pub const DAYS_PER_YEAR: i64 = 365;
pub const ROTATION_INTERVAL_DAYS: i64 = 120;
pub const APPRAISAL_CYCLE_DAYS: i64 = 3 * DAYS_PER_YEAR;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentKind {
    Graduation,
    GmcRegistration,
    JobApplication,
    JoinHospital,
    Training,
    Rotation,
    RcpeAccreditation,
    Qualification,
    MoveAbroad,
    AppraisalRevalidation,
}

/// Reporting rows. Registration with the regulator is reported together
/// with graduation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Graduation,
    JobApplication,
    JoinHospital,
    Training,
    Rotation,
    RcpeAccreditation,
    Qualification,
    MoveAbroad,
    AppraisalRevalidation,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Graduation,
        Stage::JobApplication,
        Stage::JoinHospital,
        Stage::Training,
        Stage::Rotation,
        Stage::RcpeAccreditation,
        Stage::Qualification,
        Stage::MoveAbroad,
        Stage::AppraisalRevalidation,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Stage::Graduation => "Graduating",
            Stage::JobApplication => "Applying for a job",
            Stage::JoinHospital => "Joining a hospital",
            Stage::Training => "Training",
            Stage::Rotation => "Rotation",
            Stage::RcpeAccreditation => "RCPE accreditation",
            Stage::Qualification => "Qualifying as a physician",
            Stage::MoveAbroad => "Moving abroad",
            Stage::AppraisalRevalidation => "Appraisal and revalidation",
        }
    }
}

impl MomentKind {
    pub fn stage(self) -> Stage {
        match self {
            MomentKind::Graduation | MomentKind::GmcRegistration => Stage::Graduation,
            MomentKind::JobApplication => Stage::JobApplication,
            MomentKind::JoinHospital => Stage::JoinHospital,
            MomentKind::Training => Stage::Training,
            MomentKind::Rotation => Stage::Rotation,
            MomentKind::RcpeAccreditation => Stage::RcpeAccreditation,
            MomentKind::Qualification => Stage::Qualification,
            MomentKind::MoveAbroad => Stage::MoveAbroad,
            MomentKind::AppraisalRevalidation => Stage::AppraisalRevalidation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recurrence {
    pub every_days: i64,
    /// Last day an occurrence may start; defaults to the end of the career.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub until_day: Option<i64>,
}

/// Restriction by entity name; resolved to a DID at run time.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestrictionSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub issuer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    #[serde(default)]
    pub restriction: RestrictionSpec,
}

/// One protocol step. `{date}` and `{n}` in issued values expand to the
/// occurrence date and its 1-based number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Step {
    Connect {
        with: String,
        #[serde(default)]
        mode: FormationMode,
    },
    Issue {
        issuer: String,
        schema_id: String,
        values: BTreeMap<String, String>,
    },
    RequestProof {
        verifier: String,
        attributes: Vec<AttributeSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expiry_days: Option<i64>,
    },
    Present {
        #[serde(default)]
        selection: SelectionChoice,
        /// Answers this one consent prompt instead of the holder's policy.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        consent: Option<Decision>,
    },
    Verify,
    ExportImport,
}

impl Step {
    /// Holder-facing exchanges this step costs.
    pub fn interactions(&self) -> u32 {
        match self {
            Step::Connect { .. } | Step::Issue { .. } | Step::RequestProof { .. } | Step::Present { .. } => 1,
            Step::Verify | Step::ExportImport => 0,
        }
    }

    pub fn action(&self) -> &'static str {
        match self {
            Step::Connect { .. } => "connect",
            Step::Issue { .. } => "issue",
            Step::RequestProof { .. } => "request_proof",
            Step::Present { .. } => "present",
            Step::Verify => "verify",
            Step::ExportImport => "export_import",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moment {
    pub moment_id: String,
    pub kind: MomentKind,
    pub day: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recurrence: Option<Recurrence>,
    /// Overrides the time model's baseline for this moment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_cost_days: Option<f64>,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentRuleSpec {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verifier: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restricted_issuer: Option<String>,
    pub decision: Decision,
}

fn allow() -> Decision {
    Decision::Allow
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub version: String,
    pub name: String,
    pub career_years: u32,
    pub holder: String,
    #[serde(default)]
    pub consent_rules: Vec<ConsentRuleSpec>,
    #[serde(default = "allow")]
    pub consent_fallback: Decision,
    pub moments: Vec<Moment>,
}

/// One dated run of a moment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Occurrence {
    pub day: i64,
    pub moment_index: usize,
    pub number: u32,
}

impl ScenarioScript {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let script: ScenarioScript =
            serde_json::from_str(text).map_err(|e| ScenarioError::ScriptInvalid(e.to_string()))?;
        script.validate()?;
        Ok(script)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("script serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.version != SCRIPT_VERSION {
            return Err(ScenarioError::ScriptInvalid(format!("unsupported script version `{}`", self.version)));
        }
        let mut ids = BTreeSet::new();
        for m in &self.moments {
            if !ids.insert(m.moment_id.as_str()) {
                return Err(ScenarioError::ScriptInvalid(format!("duplicate moment id `{}`", m.moment_id)));
            }
            if m.day < 0 || m.day > self.horizon_days() {
                return Err(ScenarioError::ScriptInvalid(format!("moment `{}` starts outside the career", m.moment_id)));
            }
            if let Some(r) = m.recurrence {
                if r.every_days <= 0 {
                    return Err(ScenarioError::ScriptInvalid(format!("moment `{}` recurs every {} days", m.moment_id, r.every_days)));
                }
            }
            if m.baseline_cost_days.is_some_and(|d| !d.is_finite() || d < 0.0) {
                return Err(ScenarioError::ScriptInvalid(format!("moment `{}` has a negative baseline", m.moment_id)));
            }
        }
        Ok(())
    }

    pub fn horizon_days(&self) -> i64 {
        i64::from(self.career_years) * DAYS_PER_YEAR
    }

    /// Every occurrence in execution order: by day, then script order.
    pub fn occurrences(&self) -> Vec<Occurrence> {
        let horizon = self.horizon_days();
        let mut out = Vec::new();
        for (i, m) in self.moments.iter().enumerate() {
            match m.recurrence {
                None => out.push(Occurrence { day: m.day, moment_index: i, number: 1 }),
                Some(r) => {
                    let last = r.until_day.unwrap_or(horizon).min(horizon);
                    let mut day = m.day;
                    let mut number = 1;
                    while day <= last {
                        out.push(Occurrence { day, moment_index: i, number });
                        day += r.every_days;
                        number += 1;
                    }
                }
            }
        }
        out.sort();
        out
    }

    pub fn empty(name: &str) -> Self {
        ScenarioScript {
            version: SCRIPT_VERSION.to_string(),
            name: name.to_string(),
            career_years: 9,
            holder: DOCTOR.to_string(),
            consent_rules: Vec::new(),
            consent_fallback: Decision::Allow,
            moments: Vec::new(),
        }
    }

    /// Nine years of a doctor's career across the six default entities.
    pub fn default_career() -> Self {
        let mut s = Self::empty("default-career");
        s.consent_rules.push(ConsentRuleSpec {
            id: "auto-allow-gmc".to_string(),
            verifier: None,
            restricted_issuer: Some(GMC.to_string()),
            decision: Decision::Allow,
        });
        s.moments = vec![
            moment("graduation", MomentKind::Graduation, 0, vec![
                connect_in_person(MEDICAL_SCHOOL),
                issue(MEDICAL_SCHOOL, "medical_degree:1", &[
                    ("full_name", FULL_NAME),
                    ("date_of_birth", DATE_OF_BIRTH),
                    ("degree", "MBChB"),
                    ("university", "University of Edinburgh"),
                    ("graduation_date", "{date}"),
                ]),
            ]),
            moment("gmc-registration", MomentKind::GmcRegistration, 14, vec![
                connect(GMC),
                request(GMC, &[
                    ("full_name", Some("medical_degree:1"), Some(MEDICAL_SCHOOL)),
                    ("date_of_birth", Some("medical_degree:1"), Some(MEDICAL_SCHOOL)),
                    ("degree", Some("medical_degree:1"), Some(MEDICAL_SCHOOL)),
                ]),
                present(),
                Step::Verify,
                issue(GMC, "gmc_license:1", &[
                    ("full_name", FULL_NAME),
                    ("gmc_number", GMC_NUMBER),
                    ("license_status", "full"),
                ]),
            ]),
            moment("job-application", MomentKind::JobApplication, 30, vec![
                connect(EDINBURGH),
                request(EDINBURGH, &[
                    ("degree", Some("medical_degree:1"), None),
                    ("gmc_number", Some("gmc_license:1"), Some(GMC)),
                    ("license_status", Some("gmc_license:1"), Some(GMC)),
                ]),
                present(),
                Step::Verify,
            ]),
            moment("join-hospital", MomentKind::JoinHospital, 60, vec![
                request(EDINBURGH, &[
                    ("full_name", Some("gmc_license:1"), Some(GMC)),
                    ("date_of_birth", Some("medical_degree:1"), None),
                    ("gmc_number", Some("gmc_license:1"), Some(GMC)),
                ]),
                present(),
                Step::Verify,
                issue(EDINBURGH, "identity_verification:1", &[
                    ("full_name", FULL_NAME),
                    ("date_of_birth", DATE_OF_BIRTH),
                    ("check_level", "full"),
                    ("checked_on", "{date}"),
                ]),
                issue(EDINBURGH, "employment:1", &[
                    ("employer", EDINBURGH),
                    ("role", "Foundation Doctor"),
                    ("start_date", "{date}"),
                ]),
            ]),
            Moment {
                recurrence: Some(Recurrence { every_days: 2 * DAYS_PER_YEAR, until_day: None }),
                ..moment("training", MomentKind::Training, 120, vec![
                    connect(HES),
                    issue(HES, "training_record:1", &[
                        ("course_name", "Clinical Skills Module {n}"),
                        ("provider", HES),
                        ("completed_on", "{date}"),
                    ]),
                ])
            },
            Moment {
                recurrence: Some(Recurrence { every_days: ROTATION_INTERVAL_DAYS, until_day: Some(240 + 4 * ROTATION_INTERVAL_DAYS) }),
                ..moment("rotation", MomentKind::Rotation, 240, vec![
                    connect(GLASGOW),
                    request(GLASGOW, &[
                        ("full_name", Some("identity_verification:1"), Some(EDINBURGH)),
                        ("date_of_birth", Some("identity_verification:1"), Some(EDINBURGH)),
                        ("gmc_number", Some("gmc_license:1"), Some(GMC)),
                    ]),
                    present(),
                    Step::Verify,
                    issue(GLASGOW, "rotation_placement:1", &[
                        ("hospital", GLASGOW),
                        ("specialty", "General Medicine"),
                        ("start_date", "{date}"),
                    ]),
                ])
            },
            Moment {
                recurrence: Some(Recurrence { every_days: APPRAISAL_CYCLE_DAYS, until_day: None }),
                ..moment("appraisal", MomentKind::AppraisalRevalidation, APPRAISAL_CYCLE_DAYS, vec![
                    connect(GMC),
                    request(GMC, &[
                        ("course_name", Some("training_record:1"), Some(HES)),
                        ("completed_on", Some("training_record:1"), Some(HES)),
                        ("gmc_number", Some("gmc_license:1"), Some(GMC)),
                    ]),
                    Step::Present { selection: SelectionChoice::Oldest, consent: None },
                    Step::Verify,
                ])
            },
            moment("rcpe-accreditation", MomentKind::RcpeAccreditation, 4 * DAYS_PER_YEAR, vec![
                connect(RCPE),
                request(RCPE, &[
                    ("degree", Some("medical_degree:1"), Some(MEDICAL_SCHOOL)),
                    ("gmc_number", Some("gmc_license:1"), Some(GMC)),
                    ("course_name", Some("training_record:1"), Some(HES)),
                ]),
                present(),
                Step::Verify,
                issue(RCPE, "rcpe_accreditation:1", &[
                    ("programme", "Internal Medicine Training"),
                    ("specialty", "General Medicine"),
                    ("accredited_on", "{date}"),
                ]),
            ]),
            moment("qualification", MomentKind::Qualification, 7 * DAYS_PER_YEAR, vec![
                connect(RCPE),
                request(RCPE, &[
                    ("programme", Some("rcpe_accreditation:1"), Some(RCPE)),
                    ("specialty", Some("rcpe_accreditation:1"), Some(RCPE)),
                    ("full_name", Some("gmc_license:1"), Some(GMC)),
                ]),
                present(),
                Step::Verify,
                issue(RCPE, "qualified_physician:1", &[
                    ("full_name", FULL_NAME),
                    ("specialty", "General Medicine"),
                    ("qualified_on", "{date}"),
                ]),
            ]),
            moment("move-abroad", MomentKind::MoveAbroad, 3000, vec![
                connect(GMC),
                issue(GMC, "good_standing:1", &[
                    ("gmc_number", GMC_NUMBER),
                    ("status", "in good standing"),
                    ("issued_on", "{date}"),
                ]),
                Step::ExportImport,
                request(RCPE, &[
                    ("status", Some("good_standing:1"), Some(GMC)),
                    ("specialty", Some("qualified_physician:1"), Some(RCPE)),
                ]),
                present(),
                Step::Verify,
            ]),
        ];
        s
    }

    /// A single rotation for a doctor who already holds the credentials a
    /// new hospital asks for.
    pub fn rotation_only() -> Self {
        let career = Self::default_career();
        let keep = ["graduation", "gmc-registration", "job-application", "join-hospital"];
        let mut s = Self::empty("rotation-only");
        s.career_years = 1;
        s.consent_rules = career.consent_rules.clone();
        s.moments = career.moments.into_iter().filter(|m| keep.contains(&m.moment_id.as_str())).collect();
        let mut rotation = Self::default_career().moments.into_iter().find(|m| m.kind == MomentKind::Rotation).expect("rotation");
        rotation.recurrence = None;
        for step in &mut rotation.steps {
            if let Step::Present { selection, .. } = step {
                *selection = SelectionChoice::Oldest;
            }
        }
        s.moments.push(rotation);
        s
    }

    pub const TEMPLATES: [&'static str; 3] = ["default-career", "rotation-only", "empty"];

    pub fn template(name: &str) -> Option<Self> {
        match name {
            "default-career" => Some(Self::default_career()),
            "rotation-only" => Some(Self::rotation_only()),
            "empty" => Some(Self::empty("empty")),
            _ => None,
        }
    }
}

pub const FULL_NAME: &str = "Alex Morgan";
pub const DATE_OF_BIRTH: &str = "1996-03-14";
pub const GMC_NUMBER: &str = "7654321";

fn moment(id: &str, kind: MomentKind, day: i64, steps: Vec<Step>) -> Moment {
    Moment { moment_id: id.to_string(), kind, day, recurrence: None, baseline_cost_days: None, steps }
}

fn connect(with: &str) -> Step {
    Step::Connect { with: with.to_string(), mode: FormationMode::Website }
}

fn connect_in_person(with: &str) -> Step {
    Step::Connect { with: with.to_string(), mode: FormationMode::FaceToFace }
}

fn issue(issuer: &str, schema_id: &str, values: &[(&str, &str)]) -> Step {
    Step::Issue {
        issuer: issuer.to_string(),
        schema_id: schema_id.to_string(),
        values: values.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
    }
}

fn request(verifier: &str, attributes: &[(&str, Option<&str>, Option<&str>)]) -> Step {
    Step::RequestProof {
        verifier: verifier.to_string(),
        attributes: attributes
            .iter()
            .map(|(name, schema, issuer)| AttributeSpec {
                name: name.to_string(),
                restriction: RestrictionSpec {
                    schema_id: schema.map(str::to_string),
                    issuer: issuer.map(str::to_string),
                },
            })
            .collect(),
        expiry_days: None,
    }
}

fn present() -> Step {
    Step::Present { selection: SelectionChoice::Default, consent: None }
}
