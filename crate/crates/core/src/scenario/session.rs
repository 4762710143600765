//! A persistent ecosystem in a directory, for single-interaction commands.
//!
//! Agent keys never touch disk. The directory holds the config, the seed and
//! a journal of every action taken; opening a session rebuilds the
//! ecosystem by replaying the journal, which is deterministic under the seed.
//! Proof requests and presentations travel as JSON files between commands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{setup_ecosystem, EcosystemConfig};
use super::engine::resolve_attributes;
use super::script::AttributeSpec;
use super::{ScenarioError, AUDIT_FILE, MESSAGES_FILE, REGISTRY_FILE, WALLET_FILE};
use crate::agents::{ConsentPolicy, Decision, Ecosystem, ProofAnswer, SelectionChoice, StoreOutcome};
use crate::b64;
use crate::connections::FormationMode;
use crate::credentials::HeldCredential;
use crate::crypto::GroupParams;
use crate::presentation::{Presentation, ProofRequest, VerificationResult};
use crate::registry::Did;

pub const SESSION_VERSION: &str = "cpx-session/1";
pub const SESSION_FILE: &str = "session.json";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum SessionAction {
    Connect {
        with: String,
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
    Answer {
        request: ProofRequest,
        #[serde(default)]
        selection: SelectionChoice,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        decision: Option<Decision>,
    },
    Verify {
        verifier: String,
        presentation: Presentation,
    },
    ImportWallet {
        #[serde(with = "b64::vec")]
        data: Vec<u8>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub day: i64,
    #[serde(flatten)]
    pub action: SessionAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionFile {
    pub version: String,
    pub seed: u64,
    pub group_id: String,
    pub journal: Vec<JournalEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionOutput {
    Connected(Did),
    Issued(Box<HeldCredential>),
    IssueRefused(String),
    Requested(ProofRequest),
    Answered(ProofAnswer),
    Verified(VerificationResult),
    Imported(usize),
}

pub struct Session {
    dir: PathBuf,
    config: EcosystemConfig,
    file: SessionFile,
    eco: Ecosystem,
}

impl Session {
    /// Creates a fresh session directory.
    pub fn init(dir: &Path, config: EcosystemConfig, params: &'static GroupParams, seed: u64) -> Result<Self, ScenarioError> {
        let eco = setup_ecosystem(&config, params, seed)?;
        let file = SessionFile {
            version: SESSION_VERSION.to_string(),
            seed,
            group_id: params.group_id().to_string(),
            journal: Vec::new(),
        };
        let session = Session { dir: dir.to_path_buf(), config, file, eco };
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        write(&dir.join(CONFIG_FILE), &serde_json::to_string_pretty(&session.config).expect("config serializes"))?;
        session.save()?;
        Ok(session)
    }

    /// Rebuilds the session by replaying its journal.
    pub fn open(dir: &Path) -> Result<Self, ScenarioError> {
        let config = EcosystemConfig::from_json(&read(&dir.join(CONFIG_FILE))?)?;
        let file: SessionFile = serde_json::from_str(&read(&dir.join(SESSION_FILE))?)
            .map_err(|e| ScenarioError::Io(format!("{}: {e}", dir.join(SESSION_FILE).display())))?;
        if file.version != SESSION_VERSION {
            return Err(ScenarioError::Io(format!("unsupported session version `{}`", file.version)));
        }
        let params = GroupParams::by_id(&file.group_id)
            .ok_or_else(|| ScenarioError::Io(format!("unknown group `{}`", file.group_id)))?;
        let eco = setup_ecosystem(&config, params, file.seed)?;
        let journal = file.journal.clone();
        let mut session = Session { dir: dir.to_path_buf(), config, file: SessionFile { journal: Vec::new(), ..file }, eco };
        for (i, entry) in journal.into_iter().enumerate() {
            session
                .execute(entry.day, &entry.action)
                .map_err(|cause| ScenarioError::Io(format!("journal entry {i} no longer replays: {cause}")))?;
            session.file.journal.push(entry);
        }
        Ok(session)
    }

    pub fn ecosystem(&self) -> &Ecosystem {
        &self.eco
    }

    pub fn holder(&self) -> &str {
        &self.config.holder
    }

    pub fn journal(&self) -> &[JournalEntry] {
        &self.file.journal
    }

    /// Runs `action` on `day` (default: the current simulated day),
    /// journals it and saves. Failed actions leave no trace.
    pub fn apply(&mut self, day: Option<i64>, action: SessionAction) -> Result<ActionOutput, ScenarioError> {
        let day = day.unwrap_or_else(|| self.eco.clock.day());
        if day < self.eco.clock.day() {
            return Err(ScenarioError::ScriptInvalid(format!("day {day} is in the past")));
        }
        let output = self.execute(day, &action).map_err(|cause| ScenarioError::StepFailed {
            moment_id: "session".to_string(),
            occurrence: self.file.journal.len() as u32 + 1,
            step_index: 0,
            action: action_name(&action).to_string(),
            cause,
        })?;
        self.file.journal.push(JournalEntry { day, action });
        self.save()?;
        Ok(output)
    }

    fn ensure_connection(&mut self, with: &str) -> Result<(), String> {
        let holder = self.config.holder.clone();
        let connected = self.eco.agent(&holder).map_err(|e| e.to_string())?.wallet.connection_with(with).is_some();
        if !connected {
            self.eco.connect(with, &holder, FormationMode::Website).map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    fn execute(&mut self, day: i64, action: &SessionAction) -> Result<ActionOutput, String> {
        self.eco.clock.advance_to_day(day);
        let holder = self.config.holder.clone();
        match action {
            SessionAction::Connect { with } => {
                self.eco.connect(with, &holder, FormationMode::Website).map(ActionOutput::Connected).map_err(|e| e.to_string())
            }
            SessionAction::Issue { issuer, schema_id, values } => {
                self.ensure_connection(issuer)?;
                match self.eco.issue_credential(issuer, &holder, schema_id, values).map_err(|e| e.to_string())? {
                    StoreOutcome::Accepted(id) => {
                        let wallet = &self.eco.agent(&holder).map_err(|e| e.to_string())?.wallet;
                        let held = wallet.credential(&id).ok_or("stored credential missing")?.clone();
                        Ok(ActionOutput::Issued(Box::new(held)))
                    }
                    StoreOutcome::Refused(reason) => Ok(ActionOutput::IssueRefused(reason.to_string())),
                }
            }
            SessionAction::RequestProof { verifier, attributes, expiry_days } => {
                self.ensure_connection(verifier)?;
                let requested = resolve_attributes(&self.eco, attributes)?;
                let expiry = expiry_days.map(|d| self.eco.clock.now().plus_days(d));
                let request = self.eco.prepare_proof_request(verifier, requested, expiry).map_err(|e| e.to_string())?;
                Ok(ActionOutput::Requested(request))
            }
            SessionAction::Answer { request, selection, decision } => {
                self.eco.set_selection(&holder, *selection).map_err(|e| e.to_string())?;
                let saved = decision.map(|answer| {
                    let agent = self.eco.agent_mut(&holder).expect("holder exists");
                    std::mem::replace(&mut agent.consent_policy, ConsentPolicy::AlwaysAsk { answer })
                });
                let answer = self.eco.answer_proof_request(&holder, request);
                if let Some(policy) = saved {
                    self.eco.agent_mut(&holder).expect("holder exists").consent_policy = policy;
                }
                self.eco.set_selection(&holder, SelectionChoice::Default).map_err(|e| e.to_string())?;
                answer.map(ActionOutput::Answered).map_err(|e| e.to_string())
            }
            SessionAction::Verify { verifier, presentation } => self
                .eco
                .verify_presentation(verifier, presentation)
                .map(ActionOutput::Verified)
                .map_err(|e| e.to_string()),
            SessionAction::ImportWallet { data } => {
                self.eco.import_wallet(&holder, data).map_err(|e| e.to_string())?;
                Ok(ActionOutput::Imported(self.eco.agent(&holder).map_err(|e| e.to_string())?.wallet.credentials.len()))
            }
        }
    }

    fn save(&self) -> Result<(), ScenarioError> {
        let holder = self.eco.agent(&self.config.holder).map_err(|e| ScenarioError::Io(e.to_string()))?;
        let messages: String =
            self.eco.bus.log().iter().map(|m| serde_json::to_string(m).expect("message serializes") + "\n").collect();
        write(&self.dir.join(SESSION_FILE), &serde_json::to_string_pretty(&self.file).expect("session serializes"))?;
        write(&self.dir.join(REGISTRY_FILE), &self.eco.registry.export_json())?;
        write(&self.dir.join(AUDIT_FILE), &self.eco.audit.export_jsonl())?;
        write(&self.dir.join(MESSAGES_FILE), &messages)?;
        write(
            &self.dir.join(WALLET_FILE),
            &serde_json::to_string_pretty(&holder.wallet.list_all_data()).expect("inventory serializes"),
        )
    }
}

fn action_name(action: &SessionAction) -> &'static str {
    match action {
        SessionAction::Connect { .. } => "connect",
        SessionAction::Issue { .. } => "issue",
        SessionAction::RequestProof { .. } => "request_proof",
        SessionAction::Answer { .. } => "present",
        SessionAction::Verify { .. } => "verify",
        SessionAction::ImportWallet { .. } => "import_wallet",
    }
}

fn io(path: &Path, e: std::io::Error) -> ScenarioError {
    ScenarioError::Io(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    fs::read_to_string(path).map_err(|e| io(path, e))
}

fn write(path: &Path, body: &str) -> Result<(), ScenarioError> {
    fs::write(path, body).map_err(|e| io(path, e))
}
