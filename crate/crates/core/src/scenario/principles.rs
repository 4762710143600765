//! Compliance report: one automated check per principle that has an
//! operational meaning here, run over a finished trace.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::engine::RunTrace;
use crate::agents::{Decision, Ecosystem, Wallet};
use crate::audit::{verify_chain, ChainStatus, EventType};
use crate::clock::Timestamp;
use crate::connections::payload_types;
use crate::credentials::{check_credential, CredentialBody};
use crate::encoding::{Canonical, Value};
use crate::ids::Nonce;
use crate::presentation::{evaluate, Presentation};
use crate::registry::EntryPayload;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    NotMachineCheckable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrincipleRow {
    pub rank: usize,
    pub principle: String,
    pub group: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check_id: Option<String>,
    pub status: Status,
    pub evidence: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrinciplesReport {
    pub rows: Vec<PrincipleRow>,
    pub machine_checkable_pass: bool,
}

impl PrinciplesReport {
    pub fn row(&self, principle: &str) -> Option<&PrincipleRow> {
        self.rows.iter().find(|r| r.principle == principle)
    }

    pub fn status(&self, principle: &str) -> Option<Status> {
        self.row(principle).map(|r| r.status)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.rows.iter().filter(|r| r.status == Status::Fail).map(|r| r.principle.as_str()).collect()
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:>2}  {:<22} {:<20} {:<28} {:<22} evidence", "#", "principle", "group", "check", "status");
        for r in &self.rows {
            let status = match r.status {
                Status::Pass => "pass",
                Status::Fail => "FAIL",
                Status::NotMachineCheckable => "not machine-checkable",
            };
            let _ = writeln!(
                out,
                "{:>2}  {:<22} {:<20} {:<28} {:<22} {}",
                r.rank,
                r.principle,
                r.group,
                r.check_id.as_deref().unwrap_or("-"),
                status,
                r.evidence
            );
        }
        out
    }
}

/// Report order: the three top-priority groups first, then the remaining
/// checkable principles, then the rest in table order.
pub const CHECKABLE: [(&str, &str, &str); 12] = [
    ("Protection", "Protection", "tamper-fuzz"),
    ("Control", "Control & Consent", "selection-override"),
    ("Consent", "Control & Consent", "consent-completeness"),
    ("Interoperability", "Interoperability", "cross-verifier-acceptance"),
    ("Minimalization", "Other", "disclosed-equals-requested"),
    ("Disclosure", "Other", "selective-disclosure"),
    ("Access", "Other", "inventory-completeness"),
    ("Portability", "Other", "export-import-equivalence"),
    ("Transparency", "Other", "audit-chain"),
    ("Persistence", "Other", "long-lived-credential"),
    ("Autonomy", "Other", "peer-dids-off-registry"),
    ("Existence", "Other", "holder-without-registry"),
];

pub const NOT_CHECKABLE: [&str; 13] = [
    "Ownership",
    "Single source",
    "Standard",
    "Cost",
    "Availability",
    "Human welfare",
    "Non-maleficence",
    "Justice",
    "Trustworthiness",
    "Privacy",
    "Dignity",
    "Solidarity",
    "Environmental welfare",
];

#[derive(Debug, Clone, Copy)]
pub struct PrincipleOptions {
    pub tamper_trials: usize,
    pub seed: u64,
}

impl Default for PrincipleOptions {
    fn default() -> Self {
        PrincipleOptions { tamper_trials: 64, seed: 0 }
    }
}

type CheckResult = Result<String, String>;

pub fn run_principles_checks(trace: &RunTrace, eco: &Ecosystem, opts: &PrincipleOptions) -> PrinciplesReport {
    let mut rows = Vec::with_capacity(CHECKABLE.len() + NOT_CHECKABLE.len());
    for (principle, group, check_id) in CHECKABLE {
        let result = match check_id {
            "tamper-fuzz" => check_protection(trace, eco, opts),
            "selection-override" => check_control(trace),
            "consent-completeness" => check_consent(trace),
            "cross-verifier-acceptance" => check_interoperability(trace),
            "disclosed-equals-requested" => check_minimalization(trace),
            "selective-disclosure" => check_disclosure(trace, eco),
            "inventory-completeness" => check_access(trace, eco),
            "export-import-equivalence" => check_portability(trace, eco),
            "audit-chain" => check_transparency(trace),
            "long-lived-credential" => check_persistence(trace, eco),
            "peer-dids-off-registry" => check_autonomy(eco),
            "holder-without-registry" => check_existence(trace, eco),
            other => Err(format!("no check named {other}")),
        };
        let (status, evidence) = match result {
            Ok(e) => (Status::Pass, e),
            Err(e) => (Status::Fail, e),
        };
        rows.push(PrincipleRow {
            rank: rows.len() + 1,
            principle: principle.to_string(),
            group: group.to_string(),
            check_id: Some(check_id.to_string()),
            status,
            evidence,
        });
    }
    for principle in NOT_CHECKABLE {
        rows.push(PrincipleRow {
            rank: rows.len() + 1,
            principle: principle.to_string(),
            group: "Other".to_string(),
            check_id: None,
            status: Status::NotMachineCheckable,
            evidence: "not machine-checkable".to_string(),
        });
    }
    let machine_checkable_pass = rows.iter().all(|r| r.status != Status::Fail);
    PrinciplesReport { rows, machine_checkable_pass }
}

/// Appends a presentation message whose request was never consented to.
pub fn inject_consent_violation(trace: &mut RunTrace) -> bool {
    let Some(mut record) = trace.messages.iter().rev().find(|m| m.envelope.payload_type == payload_types::PRESENTATION).cloned()
    else {
        return false;
    };
    let Ok(mut p) = serde_json::from_slice::<Presentation>(&record.envelope.payload) else {
        return false;
    };
    p.request_id = Nonce([0xEE; 16]);
    record.envelope.payload = serde_json::to_vec(&p).expect("presentation serializes");
    record.index = trace.messages.len() as u64;
    record.timestamp = record.timestamp.plus_seconds(1);
    trace.messages.push(record);
    true
}

fn mutate(bytes: &[u8], rng: &mut ChaCha20Rng) -> Vec<u8> {
    let mut out = bytes.to_vec();
    let i = rng.gen_range(0..out.len());
    let delta = rng.gen_range(1..=255u8);
    out[i] ^= delta;
    out
}

fn check_protection(trace: &RunTrace, eco: &Ecosystem, opts: &PrincipleOptions) -> CheckResult {
    let accepted: Vec<_> = trace.verifications.iter().filter(|v| v.record.result.accepted).collect();
    if accepted.is_empty() {
        return Err("no accepted presentations to mutate".into());
    }
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed ^ 0x7a3d_f00d);
    let (mut undecodable, mut rejected) = (0usize, 0usize);
    for trial in 0..opts.tamper_trials {
        let v = accepted[rng.gen_range(0..accepted.len())];
        let original = &v.record.presentation;
        let mutated = if trial % 2 == 0 {
            Value::decode(&mutate(&original.to_value().encode(), &mut rng))
                .ok()
                .and_then(|value| Presentation::from_value(&value).ok())
        } else {
            let k = rng.gen_range(0..original.sources.len());
            let body = mutate(&original.sources[k].body.to_value().encode(), &mut rng);
            Value::decode(&body).ok().and_then(|value| CredentialBody::from_value(&value).ok()).map(|body| {
                let mut p = original.clone();
                p.sources[k].body = body;
                p
            })
        };
        let Some(p) = mutated else {
            undecodable += 1;
            continue;
        };
        let result = evaluate(eco.params, &eco.registry, &v.record.request, &p, true, v.record.timestamp);
        if result.accepted {
            return Err(format!("trial {trial}: mutated presentation for request {} accepted", v.record.request.request_id.to_hex()));
        }
        rejected += 1;
    }
    Ok(format!(
        "{} mutations over {} presentations: 0 accepted ({undecodable} undecodable, {rejected} rejected by checks)",
        opts.tamper_trials,
        accepted.len()
    ))
}

fn check_control(trace: &RunTrace) -> CheckResult {
    if trace.selections.is_empty() {
        return Err("trace has no presentation with an explicit selection".into());
    }
    for s in &trace.selections {
        if s.expected.is_empty() || s.expected != s.presented {
            return Err(format!("trace.json selections: {} #{} presented a different assignment", s.moment_id, s.number));
        }
    }
    Ok(format!("trace.json selections: {} explicit choices honoured", trace.selections.len()))
}

fn check_consent(trace: &RunTrace) -> CheckResult {
    let mut count = 0;
    for m in trace.messages.iter().filter(|m| m.envelope.payload_type == payload_types::PRESENTATION) {
        let p: Presentation = serde_json::from_slice(&m.envelope.payload)
            .map_err(|e| format!("messages.jsonl#{}: undecodable presentation: {e}", m.index))?;
        let granted = trace
            .consent_log
            .iter()
            .any(|c| c.request_id == p.request_id && c.decision == Decision::Allow && c.timestamp <= m.timestamp);
        if !granted {
            return Err(format!(
                "messages.jsonl#{}: presentation for request {} has no prior consent entry",
                m.index,
                p.request_id.to_hex()
            ));
        }
        count += 1;
    }
    Ok(format!("messages.jsonl: {count} presentations, each preceded by an Allow entry in the consent log"))
}

fn check_interoperability(trace: &RunTrace) -> CheckResult {
    let mut by_credential: BTreeMap<_, (String, BTreeSet<&str>)> = BTreeMap::new();
    for v in trace.verifications.iter().filter(|v| v.record.result.accepted) {
        for s in &v.record.presentation.sources {
            by_credential
                .entry(s.body.credential_id)
                .or_insert_with(|| (s.body.schema_id.clone(), BTreeSet::new()))
                .1
                .insert(v.verifier.as_str());
        }
    }
    let best = by_credential.values().max_by_key(|(_, verifiers)| verifiers.len());
    match best {
        Some((schema, verifiers)) if verifiers.len() >= 2 => {
            let names: Vec<&str> = verifiers.iter().copied().collect();
            Ok(format!("one {schema} credential accepted by {} verifiers: {}", names.len(), names.join(", ")))
        }
        _ => Err("no credential was accepted by two different verifiers".into()),
    }
}

fn check_minimalization(trace: &RunTrace) -> CheckResult {
    let mut count = 0;
    for v in trace.verifications.iter().filter(|v| v.record.result.accepted) {
        let requested = v.record.request.names();
        let pairs = v.record.presentation.disclosed_pairs();
        let disclosed: BTreeSet<&str> = pairs.iter().map(|(n, _)| n.as_str()).collect();
        if disclosed != requested || pairs.len() != requested.len() {
            return Err(format!("request {}: disclosed set differs from requested set", v.record.request.request_id.to_hex()));
        }
        count += 1;
    }
    Ok(format!("{count} accepted presentations disclose exactly the requested attributes"))
}

fn check_disclosure(trace: &RunTrace, eco: &Ecosystem) -> CheckResult {
    for v in trace.verifications.iter().filter(|v| v.record.result.accepted) {
        for s in &v.record.presentation.sources {
            let Ok(schema) = eco.registry.resolve_schema(&s.body.schema_id) else { continue };
            if s.disclosed.len() < schema.attribute_names.len() {
                return Ok(format!(
                    "request {}: {} of {} {} attributes disclosed, the rest withheld",
                    v.record.request.request_id.to_hex(),
                    s.disclosed.len(),
                    schema.attribute_names.len(),
                    s.body.schema_id
                ));
            }
        }
    }
    Err("no presentation withheld any attribute".into())
}

fn check_access(trace: &RunTrace, eco: &Ecosystem) -> CheckResult {
    let wallet = &eco.agent(&trace.holder).map_err(|e| e.to_string())?.wallet;
    let inv = wallet.list_all_data();
    let listed: BTreeSet<_> = inv.credentials.iter().map(|c| c.credential_id).collect();
    let held: BTreeSet<_> = wallet.credentials.iter().map(|h| h.id()).collect();
    if listed != held || inv.credentials.len() != wallet.credentials.len() {
        return Err("inventory omits held credentials".into());
    }
    if inv.connections.len() != wallet.connections.len() || inv.consent_log != wallet.consent_log {
        return Err("inventory omits connections or consent entries".into());
    }
    if inv.pending_offers != wallet.pending.len() || inv.pending_requests != wallet.incoming.len() {
        return Err("inventory omits pending exchanges".into());
    }
    if inv != trace.inventory {
        return Err("wallet.json differs from the live wallet".into());
    }
    Ok(format!(
        "wallet.json: {} credentials, {} connections, {} consent entries, nothing withheld",
        inv.credentials.len(),
        inv.connections.len(),
        inv.consent_log.len()
    ))
}

fn check_portability(trace: &RunTrace, eco: &Ecosystem) -> CheckResult {
    let wallet = &eco.agent(&trace.holder).map_err(|e| e.to_string())?.wallet;
    let bytes = wallet.export(eco.params);
    let imported = Wallet::import(eco.params, &eco.registry, &bytes).map_err(|e| format!("re-import failed: {e}"))?;
    if imported.list_all_data() != wallet.list_all_data() {
        return Err("imported wallet lists different data".into());
    }
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    if !imported.self_check_link(eco.params, &mut rng) {
        return Err("imported wallet cannot open its link commitments".into());
    }
    let in_script = trace.steps.iter().filter(|s| s.action == "export_import").count();
    Ok(format!("export of {} bytes re-imports to an identical inventory; {in_script} port steps in trace.json", bytes.len()))
}

fn check_transparency(trace: &RunTrace) -> CheckResult {
    if trace.audit.is_empty() {
        return Err("audit.jsonl is empty".into());
    }
    if let ChainStatus::Broken(i) = verify_chain(&trace.audit) {
        return Err(format!("audit.jsonl: chain broken at index {i}"));
    }
    for v in &trace.verifications {
        let logged = trace
            .audit
            .iter()
            .any(|e| e.event_type == EventType::Verified && e.payload.request_id == Some(v.record.request.request_id));
        if !logged {
            return Err(format!("verification of {} missing from audit.jsonl", v.record.request.request_id.to_hex()));
        }
    }
    Ok(format!("audit.jsonl: {} events, chain Ok, every verification logged", trace.audit.len()))
}

fn check_persistence(trace: &RunTrace, eco: &Ecosystem) -> CheckResult {
    let wallet = &eco.agent(&trace.holder).map_err(|e| e.to_string())?.wallet;
    let epoch = eco.clock.epoch();
    let year_one_end = epoch.plus_days(365);
    let oldest = wallet
        .credentials
        .iter()
        .filter(|h| h.credential.body.issued_at < year_one_end)
        .min_by_key(|h| h.credential.body.issued_at)
        .ok_or("no credential issued in the first year")?;
    let body = &oldest.credential.body;
    check_credential(eco.params, &eco.registry, &oldest.credential).map_err(|r| format!("{}: {r:?}", body.credential_id))?;
    if eco.registry.is_revoked(&body.issuer_did, &body.credential_id) {
        return Err(format!("{} is revoked", body.credential_id));
    }
    let end: Timestamp = eco.clock.now();
    let years = (end.unix() - body.issued_at.unix()) / (365 * 86_400);
    Ok(format!(
        "{} issued {} still verifies on {} ({years} years later)",
        body.schema_id,
        body.issued_at.date(),
        end.date()
    ))
}

fn check_autonomy(eco: &Ecosystem) -> CheckResult {
    let mut peers = 0;
    for a in eco.agents() {
        for c in &a.wallet.connections {
            for did in [&c.my_peer_did, &c.their_peer_did] {
                if !did.is_peer() || eco.registry.resolve(did).is_ok() {
                    return Err(format!("{}: connection DID {did} is on the registry", a.name));
                }
            }
            peers += 1;
        }
    }
    let documents = eco.registry.entries().iter().filter(|e| matches!(e.payload, EntryPayload::DidDocument(_))).count();
    let anchors = eco.agents().iter().filter(|a| a.public_did.is_some()).count();
    if documents != anchors {
        return Err(format!("registry holds {documents} DID documents for {anchors} anchors"));
    }
    Ok(format!("registry.json: {documents} DID documents; {peers} connection ends use unregistered peer DIDs"))
}

fn check_existence(trace: &RunTrace, eco: &Ecosystem) -> CheckResult {
    let holder = eco.agent(&trace.holder).map_err(|e| e.to_string())?;
    if holder.public_did.is_some() {
        return Err("holder has a public DID".into());
    }
    let inventory = &trace.inventory;
    if inventory.credentials.is_empty() {
        return Err("holder holds no credentials".into());
    }
    Ok(format!("holder has no registry entry yet holds {} credentials", inventory.credentials.len()))
}
