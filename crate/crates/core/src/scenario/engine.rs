//! Executes script steps against an [`Ecosystem`] and records the trace.

use serde::{Deserialize, Serialize};

use super::config::{setup_ecosystem, EcosystemConfig};
use super::metrics::{compute, MetricsReport, OccurrenceRecord, TimeModel};
use super::script::{AttributeSpec, ScenarioScript, Step};
use super::ScenarioError;
use crate::agents::{
    ConsentPolicy, ConsentRecord, ConsentRule, Decision, Ecosystem, FlowEvent, Inventory, ProofOutcome, SelectionChoice,
    StoreOutcome, VerificationRecord,
};
use crate::audit::AuditEvent;
use crate::connections::MessageRecord;
use crate::credentials::Refusal;
use crate::crypto::GroupParams;
use crate::ids::{CredentialId, Nonce};
use crate::presentation::{select_credentials, AttributeRestriction, ProofRequest, RequestedAttribute};
use crate::registry::Did;

/// Where a step runs: the date and occurrence number used for value
/// placeholders.
#[derive(Debug, Clone)]
pub struct StepContext {
    pub date: String,
    pub number: u32,
}

/// What a step did. Only hard errors (unknown names, protocol faults) are
/// returned as `Err`; a refusal or rejection is an outcome.
#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Connected { peer_did: Did },
    Issued { credential_id: CredentialId },
    IssueRefused { reason: Refusal },
    Requested { request_id: Nonce },
    Presented { request_id: Nonce, choice: SelectionChoice, expected: Vec<CredentialId>, presented: Vec<CredentialId> },
    ConsentDenied { request_id: Nonce },
    Unsatisfiable { request_id: Nonce, missing: Vec<String> },
    Verified { request_id: Nonce, outcome: ProofOutcome },
    Ported { credentials: usize },
}

impl StepOutcome {
    pub fn is_success(&self) -> bool {
        match self {
            StepOutcome::IssueRefused { .. } | StepOutcome::ConsentDenied { .. } | StepOutcome::Unsatisfiable { .. } => false,
            StepOutcome::Verified { outcome, .. } => outcome.accepted(),
            _ => true,
        }
    }

    pub fn summary(&self) -> String {
        match self {
            StepOutcome::Connected { peer_did } => format!("connected as {peer_did}"),
            StepOutcome::Issued { credential_id } => format!("stored credential {}", credential_id.to_hex()),
            StepOutcome::IssueRefused { reason } => format!("holder refused credential: {reason:?}"),
            StepOutcome::Requested { request_id } => format!("proof request {}", request_id.to_hex()),
            StepOutcome::Presented { presented, choice, .. } => {
                let ids: Vec<String> = presented.iter().map(|c| c.to_hex()).collect();
                format!("presented {} ({choice:?})", ids.join(","))
            }
            StepOutcome::ConsentDenied { .. } => "holder denied consent".to_string(),
            StepOutcome::Unsatisfiable { missing, .. } => format!("no credentials for {}", missing.join(",")),
            StepOutcome::Verified { outcome: ProofOutcome::Verified(r), .. } => {
                if r.accepted {
                    "accepted".to_string()
                } else {
                    let failed: Vec<&str> = r.failed_checks().iter().map(|c| c.name()).collect();
                    format!("rejected: {}", failed.join(","))
                }
            }
            StepOutcome::Verified { outcome, .. } => format!("no verification: {outcome:?}"),
            StepOutcome::Ported { credentials } => format!("wallet exported and re-imported with {credentials} credentials"),
        }
    }
}

#[derive(Debug, Clone)]
struct Outstanding {
    verifier: String,
    request: ProofRequest,
    mark: usize,
}

/// Drives one holder through steps. Shared by script runs and CLI sessions.
pub struct Runner {
    pub eco: Ecosystem,
    pub holder: String,
    outstanding: Option<Outstanding>,
}

impl Runner {
    pub fn new(eco: Ecosystem, holder: &str) -> Result<Self, ScenarioError> {
        eco.agent(holder).map_err(|e| ScenarioError::ConfigInvalid(e.to_string()))?;
        Ok(Runner { eco, holder: holder.to_string(), outstanding: None })
    }

    pub fn from_config(config: &EcosystemConfig, params: &'static GroupParams, seed: u64) -> Result<Self, ScenarioError> {
        let eco = setup_ecosystem(config, params, seed)?;
        Self::new(eco, &config.holder)
    }

    pub fn outstanding_request(&self) -> Option<&ProofRequest> {
        self.outstanding.as_ref().map(|o| &o.request)
    }

    fn public_did(&self, name: &str) -> Result<Did, String> {
        public_did(&self.eco, name)
    }

    /// Installs consent rules given by entity name.
    pub fn set_consent_rules(&mut self, rules: &[super::script::ConsentRuleSpec], fallback: Decision) -> Result<(), ScenarioError> {
        let mut resolved = Vec::with_capacity(rules.len());
        for r in rules {
            let lookup = |name: &Option<String>| -> Result<Option<Did>, ScenarioError> {
                name.as_ref().map(|n| self.public_did(n).map_err(ScenarioError::ScriptInvalid)).transpose()
            };
            resolved.push(ConsentRule {
                id: r.id.clone(),
                verifier: lookup(&r.verifier)?,
                restricted_issuer: lookup(&r.restricted_issuer)?,
                decision: r.decision,
            });
        }
        self.eco
            .set_consent_policy(&self.holder, ConsentPolicy::Rules { rules: resolved, fallback })
            .map_err(|e| ScenarioError::ConfigInvalid(e.to_string()))
    }

    pub fn resolve_attributes(&self, attributes: &[AttributeSpec]) -> Result<Vec<RequestedAttribute>, String> {
        resolve_attributes(&self.eco, attributes)
    }

    pub fn execute(&mut self, step: &Step, ctx: &StepContext) -> Result<StepOutcome, String> {
        let holder = self.holder.clone();
        match step {
            Step::Connect { with, mode } => {
                let peer_did = self.eco.connect(with, &holder, *mode).map_err(|e| e.to_string())?;
                Ok(StepOutcome::Connected { peer_did })
            }
            Step::Issue { issuer, schema_id, values } => {
                let values = values
                    .iter()
                    .map(|(k, v)| (k.clone(), v.replace("{date}", &ctx.date).replace("{n}", &ctx.number.to_string())))
                    .collect();
                match self.eco.issue_credential(issuer, &holder, schema_id, &values).map_err(|e| e.to_string())? {
                    StoreOutcome::Accepted(credential_id) => Ok(StepOutcome::Issued { credential_id }),
                    StoreOutcome::Refused(reason) => Ok(StepOutcome::IssueRefused { reason }),
                }
            }
            Step::RequestProof { verifier, attributes, expiry_days } => {
                let requested = self.resolve_attributes(attributes)?;
                let expiry = expiry_days.map(|d| self.eco.clock.now().plus_days(d));
                let mark = self.eco.events().len();
                let request =
                    self.eco.send_proof_request(verifier, &holder, requested, expiry).map_err(|e| e.to_string())?;
                let request_id = request.request_id;
                self.outstanding = Some(Outstanding { verifier: verifier.clone(), request, mark });
                Ok(StepOutcome::Requested { request_id })
            }
            Step::Present { selection, consent } => {
                let out = self.outstanding.clone().ok_or("no outstanding proof request")?;
                let request_id = out.request.request_id;
                let expected = {
                    let held = &self.eco.agent(&holder).map_err(|e| e.to_string())?.wallet.credentials;
                    select_credentials(held, &out.request)
                        .candidates()
                        .and_then(|c| selection.pick(&c, held).map(|a| a.distinct()))
                        .unwrap_or_default()
                };
                self.eco.set_selection(&holder, *selection).map_err(|e| e.to_string())?;
                let saved = consent.map(|answer| {
                    let agent = self.eco.agent_mut(&holder).expect("holder exists");
                    std::mem::replace(&mut agent.consent_policy, ConsentPolicy::AlwaysAsk { answer })
                });
                let mark = self.eco.events().len();
                let result = self.eco.process_inbox(&holder);
                if let Some(policy) = saved {
                    self.eco.agent_mut(&holder).expect("holder exists").consent_policy = policy;
                }
                self.eco.set_selection(&holder, SelectionChoice::Default).map_err(|e| e.to_string())?;
                result.map_err(|e| e.to_string())?;
                for event in &self.eco.events()[mark..] {
                    match event {
                        FlowEvent::PresentationSent { request_id: r, credential_ids, .. } if *r == request_id => {
                            return Ok(StepOutcome::Presented {
                                request_id,
                                choice: *selection,
                                expected,
                                presented: credential_ids.clone(),
                            });
                        }
                        FlowEvent::ConsentDenied { request_id: r, .. } if *r == request_id => {
                            return Ok(StepOutcome::ConsentDenied { request_id });
                        }
                        FlowEvent::Unsatisfiable { request_id: r, missing, .. } if *r == request_id => {
                            return Ok(StepOutcome::Unsatisfiable { request_id, missing: missing.clone() });
                        }
                        _ => {}
                    }
                }
                Err("holder did not receive the proof request".to_string())
            }
            Step::Verify => {
                let out = self.outstanding.take().ok_or("no outstanding proof request")?;
                self.eco.process_inbox(&out.verifier).map_err(|e| e.to_string())?;
                self.eco.pump().map_err(|e| e.to_string())?;
                let outcome = self.eco.proof_outcome_since(out.mark, &out.request.request_id);
                Ok(StepOutcome::Verified { request_id: out.request.request_id, outcome })
            }
            Step::ExportImport => {
                let before = self.eco.list_all_data(&holder).map_err(|e| e.to_string())?;
                let bytes = self.eco.export_wallet(&holder).map_err(|e| e.to_string())?;
                self.eco.import_wallet(&holder, &bytes).map_err(|e| e.to_string())?;
                let after = self.eco.list_all_data(&holder).map_err(|e| e.to_string())?;
                if before != after {
                    return Err("imported wallet differs from the exported one".to_string());
                }
                Ok(StepOutcome::Ported { credentials: after.credentials.len() })
            }
        }
    }
}

fn public_did(eco: &Ecosystem, name: &str) -> Result<Did, String> {
    let agent = eco.agent(name).map_err(|e| e.to_string())?;
    agent.public_did.clone().ok_or_else(|| format!("`{name}` has no public DID"))
}

/// Turns name-based restrictions into DID-based ones.
pub fn resolve_attributes(eco: &Ecosystem, attributes: &[AttributeSpec]) -> Result<Vec<RequestedAttribute>, String> {
    attributes
        .iter()
        .map(|a| {
            let mut restriction = AttributeRestriction { schema_id: a.restriction.schema_id.clone(), issuer_did: None };
            if let Some(issuer) = &a.restriction.issuer {
                restriction.issuer_did = Some(public_did(eco, issuer)?);
            }
            Ok(RequestedAttribute::new(&a.name, restriction))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub moment_id: String,
    pub number: u32,
    pub day: i64,
    pub step_index: usize,
    pub action: String,
    pub interactions: u32,
    pub detail: String,
}

/// A presentation made with an explicit selection, and what was used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub moment_id: String,
    pub number: u32,
    pub request_id: Nonce,
    pub choice: SelectionChoice,
    pub expected: Vec<CredentialId>,
    pub presented: Vec<CredentialId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierRecord {
    pub verifier: String,
    pub record: VerificationRecord,
}

/// Everything a run produced, in memory.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub script_name: String,
    pub seed: u64,
    pub group_id: String,
    pub holder: String,
    pub steps: Vec<StepRecord>,
    pub occurrences: Vec<OccurrenceRecord>,
    pub selections: Vec<SelectionRecord>,
    pub verifications: Vec<VerifierRecord>,
    pub consent_log: Vec<ConsentRecord>,
    pub messages: Vec<MessageRecord>,
    pub audit: Vec<AuditEvent>,
    pub registry_json: String,
    pub inventory: Inventory,
    pub metrics: MetricsReport,
}

/// Runs every occurrence of `script` in day order. Stops at the first step
/// that errors or does not succeed.
pub fn run_script(
    config: &EcosystemConfig,
    script: &ScenarioScript,
    params: &'static GroupParams,
    seed: u64,
    model: &TimeModel,
) -> Result<(Runner, RunTrace), ScenarioError> {
    script.validate()?;
    if script.holder != config.holder {
        return Err(ScenarioError::ScriptInvalid(format!(
            "script holder `{}` is not the configured holder `{}`",
            script.holder, config.holder
        )));
    }
    let mut runner = Runner::from_config(config, params, seed)?;
    runner.set_consent_rules(&script.consent_rules, script.consent_fallback)?;

    let mut steps = Vec::new();
    let mut occurrences = Vec::new();
    let mut selections = Vec::new();
    for occ in script.occurrences() {
        let moment = &script.moments[occ.moment_index];
        runner.eco.clock.advance_to_day(occ.day);
        let ctx = StepContext { date: runner.eco.clock.now().date(), number: occ.number };
        let mut interactions = 0;
        for (step_index, step) in moment.steps.iter().enumerate() {
            let fail = |cause: String| ScenarioError::StepFailed {
                moment_id: moment.moment_id.clone(),
                occurrence: occ.number,
                step_index,
                action: step.action().to_string(),
                cause,
            };
            let outcome = runner.execute(step, &ctx).map_err(fail)?;
            if !outcome.is_success() {
                return Err(fail(outcome.summary()));
            }
            if let StepOutcome::Presented { request_id, choice, expected, presented } = &outcome {
                if *choice != SelectionChoice::Default {
                    selections.push(SelectionRecord {
                        moment_id: moment.moment_id.clone(),
                        number: occ.number,
                        request_id: *request_id,
                        choice: *choice,
                        expected: expected.clone(),
                        presented: presented.clone(),
                    });
                }
            }
            interactions += step.interactions();
            steps.push(StepRecord {
                moment_id: moment.moment_id.clone(),
                number: occ.number,
                day: occ.day,
                step_index,
                action: step.action().to_string(),
                interactions: step.interactions(),
                detail: outcome.summary(),
            });
        }
        occurrences.push(OccurrenceRecord {
            moment_id: moment.moment_id.clone(),
            kind: moment.kind,
            number: occ.number,
            day: occ.day,
            date: ctx.date.clone(),
            interactions,
            baseline_override: moment.baseline_cost_days,
        });
    }
    runner.eco.pump().map_err(|e| ScenarioError::StepFailed {
        moment_id: "end".to_string(),
        occurrence: 0,
        step_index: 0,
        action: "drain".to_string(),
        cause: e.to_string(),
    })?;

    let trace = collect_trace(&runner, script, seed, steps, occurrences, selections, model);
    Ok((runner, trace))
}

fn collect_trace(
    runner: &Runner,
    script: &ScenarioScript,
    seed: u64,
    steps: Vec<StepRecord>,
    occurrences: Vec<OccurrenceRecord>,
    selections: Vec<SelectionRecord>,
    model: &TimeModel,
) -> RunTrace {
    let eco = &runner.eco;
    let holder = eco.agent(&runner.holder).expect("holder exists");
    let mut verifications: Vec<VerifierRecord> = eco
        .agents()
        .iter()
        .flat_map(|a| {
            a.verifier.results.iter().map(|r| VerifierRecord { verifier: a.name.clone(), record: r.clone() })
        })
        .collect();
    verifications.sort_by_key(|v| v.record.timestamp);
    let metrics = compute(&occurrences, model);
    RunTrace {
        script_name: script.name.clone(),
        seed,
        group_id: eco.params.group_id().to_string(),
        holder: runner.holder.clone(),
        steps,
        occurrences,
        selections,
        verifications,
        consent_log: holder.wallet.consent_log.clone(),
        messages: eco.bus.log().to_vec(),
        audit: eco.audit.events().to_vec(),
        registry_json: eco.registry.export_json(),
        inventory: holder.wallet.list_all_data(),
        metrics,
    }
}
