//! Career simulation: a configured set of trust anchors, a scripted career
//! of identity moments for one doctor, and the reports derived from a run.
//!
//! ```no_run
//! use cpx::crypto::GroupParams;
//! use cpx::scenario::{run_scenario, EcosystemConfig, ScenarioScript, TimeModel};
//!
//! let run = run_scenario(
//!     &EcosystemConfig::default(),
//!     &ScenarioScript::default_career(),
//!     GroupParams::production(),
//!     7,
//!     &TimeModel::default(),
//! )
//! .unwrap();
//! print!("{}", run.trace.metrics.render_table());
//! ```

pub mod config;
pub mod engine;
pub mod metrics;
pub mod principles;
pub mod script;
pub mod session;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{setup_ecosystem, EcosystemConfig, EntityConfig, SchemaSpec};
pub use engine::{run_script, RunTrace, Runner, SelectionRecord, StepContext, StepOutcome, StepRecord, VerifierRecord};
pub use metrics::{compute, MetricsReport, OccurrenceRecord, Source, StageRow, TimeModel};
pub use principles::{inject_consent_violation, run_principles_checks, PrincipleOptions, PrinciplesReport, Status};
pub use script::{MomentKind, ScenarioScript, Stage, Step};

use crate::agents::{ConsentRecord, Ecosystem};
use crate::audit;
use crate::crypto::GroupParams;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("invalid ecosystem config: {0}")]
    ConfigInvalid(String),
    #[error("invalid script: {0}")]
    ScriptInvalid(String),
    #[error("step failed: moment `{moment_id}` #{occurrence}, step {step_index} ({action}): {cause}")]
    StepFailed { moment_id: String, occurrence: u32, step_index: usize, action: String, cause: String },
    #[error("i/o: {0}")]
    Io(String),
}

pub const MESSAGES_FILE: &str = "messages.jsonl";
pub const AUDIT_FILE: &str = "audit.jsonl";
pub const WALLET_FILE: &str = "wallet.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const PRINCIPLES_FILE: &str = "principles.json";
pub const REGISTRY_FILE: &str = "registry.json";
pub const TRACE_FILE: &str = "trace.json";

/// Run metadata and per-step records, written as `trace.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub script_name: String,
    pub seed: u64,
    pub group_id: String,
    pub holder: String,
    pub steps: Vec<StepRecord>,
    pub occurrences: Vec<OccurrenceRecord>,
    pub selections: Vec<SelectionRecord>,
    pub verifications: Vec<VerifierRecord>,
    pub consent_log: Vec<ConsentRecord>,
}

/// A finished run: the live ecosystem, its trace and the compliance report.
pub struct ScenarioRun {
    pub runner: Runner,
    pub trace: RunTrace,
    pub principles: PrinciplesReport,
}

impl ScenarioRun {
    pub fn ecosystem(&self) -> &Ecosystem {
        &self.runner.eco
    }

    pub fn summary(&self) -> TraceSummary {
        let t = &self.trace;
        TraceSummary {
            script_name: t.script_name.clone(),
            seed: t.seed,
            group_id: t.group_id.clone(),
            holder: t.holder.clone(),
            steps: t.steps.clone(),
            occurrences: t.occurrences.clone(),
            selections: t.selections.clone(),
            verifications: t.verifications.clone(),
            consent_log: t.consent_log.clone(),
        }
    }

    /// Writes every artifact into `dir`, creating it if needed.
    pub fn write_dir(&self, dir: &Path) -> Result<(), ScenarioError> {
        let io = |e: std::io::Error| ScenarioError::Io(format!("{}: {e}", dir.display()));
        fs::create_dir_all(dir).map_err(io)?;
        let t = &self.trace;
        let messages: String =
            t.messages.iter().map(|m| serde_json::to_string(m).expect("message serializes") + "\n").collect();
        let files: [(&str, String); 7] = [
            (MESSAGES_FILE, messages),
            (AUDIT_FILE, audit::export_jsonl(&t.audit)),
            (WALLET_FILE, pretty(&t.inventory)),
            (METRICS_FILE, pretty(&t.metrics)),
            (PRINCIPLES_FILE, pretty(&self.principles)),
            (REGISTRY_FILE, t.registry_json.clone()),
            (TRACE_FILE, pretty(&self.summary())),
        ];
        for (name, body) in files {
            fs::write(dir.join(name), body).map_err(io)?;
        }
        Ok(())
    }
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("artifact serializes") + "\n"
}

/// Sets up the ecosystem, runs the script and checks the principles.
pub fn run_scenario(
    config: &EcosystemConfig,
    script: &ScenarioScript,
    params: &'static GroupParams,
    seed: u64,
    model: &TimeModel,
) -> Result<ScenarioRun, ScenarioError> {
    let (runner, trace) = run_script(config, script, params, seed, model)?;
    let principles = run_principles_checks(&trace, &runner.eco, &PrincipleOptions { seed, ..PrincipleOptions::default() });
    Ok(ScenarioRun { runner, trace, principles })
}

/// Reads a JSON artifact written by [`ScenarioRun::write_dir`].
pub fn read_artifact<T: serde::de::DeserializeOwned>(dir: &Path, name: &str) -> Result<T, ScenarioError> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))
}
