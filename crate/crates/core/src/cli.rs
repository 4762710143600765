//! Batch command-line surface.
//!
//! Exit codes: 0 success, 1 usage, 2 scenario failure, 3 verification
//! failure, 4 I/O or corrupt input.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::agents::{Decision, ProofAnswer, SelectionChoice};
use crate::audit::{import_jsonl, verify_chain, ChainStatus};
use crate::crypto::Profile;
use crate::presentation::{Presentation, ProofRequest, VerificationResult};
use crate::scenario::script::{AttributeSpec, RestrictionSpec};
use crate::scenario::session::{ActionOutput, Session, SessionAction};
use crate::scenario::{
    read_artifact, run_scenario, EcosystemConfig, MetricsReport, PrinciplesReport, ScenarioError, ScenarioScript,
    TimeModel, METRICS_FILE, PRINCIPLES_FILE,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_SCENARIO: i32 = 2;
pub const EXIT_VERIFICATION: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "cpx", version, about = "Credential passport ecosystem simulator")]
pub struct Cli {
    /// Group profile for new ecosystems and runs.
    #[arg(long, global = true, default_value = "production")]
    pub profile: Profile,
    /// RNG seed for new ecosystems and runs.
    #[arg(long, global = true, env = "CPX_SEED", default_value_t = 2020)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Persistent ecosystems for single-interaction commands.
    #[command(subcommand)]
    Ecosystem(EcosystemCmd),
    /// Career scripts.
    #[command(subcommand)]
    Scenario(ScenarioCmd),
    /// The holder's wallet in a session.
    #[command(subcommand)]
    Wallet(WalletCmd),
    /// Issue one credential to the holder.
    Issue(IssueArgs),
    /// Create a proof request and write it to a file.
    RequestProof(RequestArgs),
    /// Answer a proof request file as the holder.
    Present(PresentArgs),
    /// Verify a presentation file.
    Verify(VerifyArgs),
    /// Audit log checks.
    #[command(subcommand)]
    Audit(AuditCmd),
    /// Render reports from a trace directory.
    #[command(subcommand)]
    Report(ReportCmd),
}

#[derive(Debug, Subcommand)]
pub enum EcosystemCmd {
    /// Publish every anchor and schema into a new session directory.
    Init {
        #[arg(long)]
        dir: PathBuf,
        /// Ecosystem config JSON; the built-in six entities when absent.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCmd {
    /// Run a script and write the trace directory.
    Run {
        /// Script JSON file.
        #[arg(long, conflicts_with = "template")]
        script: Option<PathBuf>,
        /// Built-in script: default-career, rotation-only or empty.
        #[arg(long)]
        template: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Time model JSON overriding the defaults.
        #[arg(long)]
        time_model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a built-in script as JSON.
    Template { name: String },
}

#[derive(Debug, Subcommand)]
pub enum WalletCmd {
    /// Everything the wallet holds.
    List {
        #[arg(long)]
        dir: PathBuf,
    },
    Export {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Import {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        file: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct IssueArgs {
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long)]
    pub issuer: String,
    #[arg(long)]
    pub schema: String,
    /// Attribute value as name=value; repeat per attribute.
    #[arg(long = "value", value_parser = parse_pair)]
    pub values: Vec<(String, String)>,
    /// Simulated day; defaults to the current one.
    #[arg(long)]
    pub day: Option<i64>,
    /// Write the issued credential here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RequestArgs {
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long)]
    pub verifier: String,
    /// `name[;schema=ID][;issuer=NAME]`; repeat per attribute.
    #[arg(long = "attr", value_parser = parse_attribute, required = true)]
    pub attributes: Vec<AttributeSpec>,
    #[arg(long)]
    pub expiry_days: Option<i64>,
    #[arg(long)]
    pub day: Option<i64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PresentArgs {
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long)]
    pub request: PathBuf,
    /// default, oldest or a candidate index.
    #[arg(long, default_value = "default", value_parser = parse_selection)]
    pub select: SelectionChoice,
    /// Decline instead of following the consent policy.
    #[arg(long)]
    pub deny: bool,
    #[arg(long)]
    pub day: Option<i64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long)]
    pub verifier: String,
    #[arg(long)]
    pub presentation: PathBuf,
    #[arg(long)]
    pub day: Option<i64>,
}

#[derive(Debug, Subcommand)]
pub enum AuditCmd {
    Verify {
        #[arg(long)]
        log: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum ReportCmd {
    Metrics {
        #[arg(long)]
        trace: PathBuf,
    },
    Principles {
        #[arg(long)]
        trace: PathBuf,
    },
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    Ok((k.trim().to_string(), v.to_string()))
}

fn parse_attribute(s: &str) -> Result<AttributeSpec, String> {
    let mut parts = s.split(';');
    let name = parts.next().unwrap_or_default().trim();
    if name.is_empty() {
        return Err("attribute name is empty".into());
    }
    let mut restriction = RestrictionSpec::default();
    for part in parts {
        match part.split_once('=') {
            Some(("schema", v)) => restriction.schema_id = Some(v.trim().to_string()),
            Some(("issuer", v)) => restriction.issuer = Some(v.trim().to_string()),
            _ => return Err(format!("unknown restriction `{part}` (expected schema=.. or issuer=..)")),
        }
    }
    Ok(AttributeSpec { name: name.to_string(), restriction })
}

fn parse_selection(s: &str) -> Result<SelectionChoice, String> {
    match s {
        "default" => Ok(SelectionChoice::Default),
        "oldest" => Ok(SelectionChoice::Oldest),
        n => n.parse().map(SelectionChoice::Index).map_err(|_| format!("expected default, oldest or an index, got `{n}`")),
    }
}

/// A failure carrying its exit code.
struct Failure(i32, String);

type Outcome = Result<i32, Failure>;

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let code = match e {
            ScenarioError::Io(_) => EXIT_IO,
            ScenarioError::ConfigInvalid(_) | ScenarioError::ScriptInvalid(_) | ScenarioError::StepFailed { .. } => {
                EXIT_SCENARIO
            }
        };
        Failure(code, e.to_string())
    }
}

fn io_fail(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure(EXIT_IO, format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| io_fail(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    serde_json::from_str(&read_text(path)?).map_err(|e| io_fail(path, e))
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_fail(parent, e))?;
    }
    fs::write(path, body).map_err(|e| io_fail(path, e))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(&cli, out) {
        Ok(code) => code,
        Err(Failure(code, message)) => {
            let _ = writeln!(err, "error: {message}");
            code
        }
    }
}

fn guard_output(cli: &Cli, path: &Path) -> Result<(), Failure> {
    if cli.profile == Profile::Toy && path.to_string_lossy().to_lowercase().contains("production") {
        return Err(Failure(
            EXIT_USAGE,
            format!("refusing to write toy-group output to `{}`", path.display()),
        ));
    }
    Ok(())
}

fn load_config(path: Option<&PathBuf>) -> Result<EcosystemConfig, Failure> {
    match path {
        Some(p) => EcosystemConfig::from_json(&read_text(p)?).map_err(|e| Failure(EXIT_SCENARIO, format!("{}: {e}", p.display()))),
        None => Ok(EcosystemConfig::default()),
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Outcome {
    let params = cli.profile.params();
    match &cli.command {
        Command::Ecosystem(EcosystemCmd::Init { dir, config }) => {
            guard_output(cli, dir)?;
            let config = load_config(config.as_ref())?;
            let session = Session::init(dir, config, params, cli.seed)?;
            let eco = session.ecosystem();
            let _ = writeln!(out, "initialised {} ({}, seed {})", dir.display(), params.group_id(), cli.seed);
            for a in eco.agents() {
                let did = a.public_did.as_ref().map_or("(no public DID)".to_string(), |d| d.to_string());
                let _ = writeln!(out, "  {:<28} {}", a.name, did);
            }
            Ok(EXIT_OK)
        }
        Command::Scenario(ScenarioCmd::Template { name }) => {
            let script = ScenarioScript::template(name).ok_or_else(|| {
                Failure(EXIT_USAGE, format!("unknown template `{name}`; known: {}", ScenarioScript::TEMPLATES.join(", ")))
            })?;
            let _ = writeln!(out, "{}", script.to_json());
            Ok(EXIT_OK)
        }
        Command::Scenario(ScenarioCmd::Run { script, template, config, time_model, out: dir }) => {
            guard_output(cli, dir)?;
            let config = load_config(config.as_ref())?;
            let script = match (script, template) {
                (Some(p), _) => ScenarioScript::from_json(&read_text(p)?)?,
                (None, Some(name)) => ScenarioScript::template(name)
                    .ok_or_else(|| Failure(EXIT_USAGE, format!("unknown template `{name}`")))?,
                (None, None) => ScenarioScript::default_career(),
            };
            let model: TimeModel = match time_model {
                Some(p) => read_json(p)?,
                None => TimeModel::default(),
            };
            let run = run_scenario(&config, &script, params, cli.seed, &model)?;
            run.write_dir(dir)?;
            let t = &run.trace;
            let _ = writeln!(
                out,
                "{}: {} occurrences, {} steps, {} credentials held; trace in {}",
                t.script_name,
                t.occurrences.len(),
                t.steps.len(),
                t.inventory.credentials.len(),
                dir.display()
            );
            let _ = write!(out, "{}", t.metrics.render_table());
            if !run.principles.machine_checkable_pass {
                let _ = writeln!(out, "failing principles: {}", run.principles.failing().join(", "));
                return Ok(EXIT_VERIFICATION);
            }
            Ok(EXIT_OK)
        }
        Command::Wallet(cmd) => wallet(cmd, out),
        Command::Issue(a) => {
            let mut session = Session::open(&a.dir)?;
            let values: BTreeMap<String, String> = a.values.iter().cloned().collect();
            let action = SessionAction::Issue { issuer: a.issuer.clone(), schema_id: a.schema.clone(), values };
            match session.apply(a.day, action)? {
                ActionOutput::Issued(held) => {
                    let _ = writeln!(out, "stored credential {} ({})", held.id().to_hex(), a.schema);
                    if let Some(path) = &a.out {
                        write_file(path, to_json(&held.credential))?;
                    }
                    Ok(EXIT_OK)
                }
                ActionOutput::IssueRefused(reason) => Err(Failure(EXIT_VERIFICATION, format!("holder refused: {reason}"))),
                other => Err(Failure(EXIT_SCENARIO, format!("unexpected outcome {other:?}"))),
            }
        }
        Command::RequestProof(a) => {
            let mut session = Session::open(&a.dir)?;
            let action = SessionAction::RequestProof {
                verifier: a.verifier.clone(),
                attributes: a.attributes.clone(),
                expiry_days: a.expiry_days,
            };
            let ActionOutput::Requested(request) = session.apply(a.day, action)? else {
                return Err(Failure(EXIT_SCENARIO, "no request produced".into()));
            };
            write_file(&a.out, to_json(&request))?;
            let _ = writeln!(out, "proof request {} written to {}", request.request_id.to_hex(), a.out.display());
            Ok(EXIT_OK)
        }
        Command::Present(a) => {
            let request: ProofRequest = read_json(&a.request)?;
            let mut session = Session::open(&a.dir)?;
            let decision = a.deny.then_some(Decision::Deny);
            let action = SessionAction::Answer { request, selection: a.select, decision };
            match session.apply(a.day, action)? {
                ActionOutput::Answered(ProofAnswer::Presented(p)) => {
                    write_file(&a.out, to_json(&p))?;
                    let ids: Vec<String> = p.credential_ids().iter().map(|c| c.to_hex()).collect();
                    let _ = writeln!(out, "presentation from {} written to {}", ids.join(","), a.out.display());
                    Ok(EXIT_OK)
                }
                ActionOutput::Answered(ProofAnswer::Denied) => {
                    let _ = writeln!(out, "consent denied; nothing presented");
                    Ok(EXIT_OK)
                }
                ActionOutput::Answered(ProofAnswer::Unsatisfiable(missing)) => {
                    Err(Failure(EXIT_VERIFICATION, format!("wallet cannot satisfy: {}", missing.join(", "))))
                }
                other => Err(Failure(EXIT_SCENARIO, format!("unexpected outcome {other:?}"))),
            }
        }
        Command::Verify(a) => {
            let presentation: Presentation = read_json(&a.presentation)?;
            let mut session = Session::open(&a.dir)?;
            let action = SessionAction::Verify { verifier: a.verifier.clone(), presentation };
            let result = match session.apply(a.day, action) {
                Ok(ActionOutput::Verified(r)) => r,
                Ok(other) => return Err(Failure(EXIT_SCENARIO, format!("unexpected outcome {other:?}"))),
                Err(ScenarioError::StepFailed { cause, .. }) => return Err(Failure(EXIT_VERIFICATION, cause)),
                Err(e) => return Err(e.into()),
            };
            print_checks(out, &result);
            Ok(if result.accepted { EXIT_OK } else { EXIT_VERIFICATION })
        }
        Command::Audit(AuditCmd::Verify { log }) => {
            let events = import_jsonl(&read_text(log)?).map_err(|e| io_fail(log, e))?;
            let status = verify_chain(&events);
            let _ = writeln!(out, "{status}");
            Ok(if status == ChainStatus::Ok { EXIT_OK } else { EXIT_VERIFICATION })
        }
        Command::Report(ReportCmd::Metrics { trace }) => {
            let report: MetricsReport = read_artifact(trace, METRICS_FILE)?;
            let _ = write!(out, "{}", report.render_table());
            let _ = writeln!(out, "json: {}", trace.join(METRICS_FILE).display());
            Ok(EXIT_OK)
        }
        Command::Report(ReportCmd::Principles { trace }) => {
            let report: PrinciplesReport = read_artifact(trace, PRINCIPLES_FILE)?;
            let _ = write!(out, "{}", report.render_table());
            let _ = writeln!(out, "json: {}", trace.join(PRINCIPLES_FILE).display());
            Ok(if report.machine_checkable_pass { EXIT_OK } else { EXIT_VERIFICATION })
        }
    }
}

fn wallet(cmd: &WalletCmd, out: &mut dyn Write) -> Outcome {
    match cmd {
        WalletCmd::List { dir } => {
            let session = Session::open(dir)?;
            let inventory = session.ecosystem().list_all_data(session.holder()).map_err(|e| Failure(EXIT_SCENARIO, e.to_string()))?;
            let _ = write!(out, "{}", to_json(&inventory));
            Ok(EXIT_OK)
        }
        WalletCmd::Export { dir, out: path } => {
            let session = Session::open(dir)?;
            let bytes = session.ecosystem().export_wallet(session.holder()).map_err(|e| Failure(EXIT_SCENARIO, e.to_string()))?;
            write_file(path, &bytes)?;
            let _ = writeln!(out, "wallet exported to {} ({} bytes)", path.display(), bytes.len());
            Ok(EXIT_OK)
        }
        WalletCmd::Import { dir, file } => {
            let data = fs::read(file).map_err(|e| io_fail(file, e))?;
            let mut session = Session::open(dir)?;
            match session.apply(None, SessionAction::ImportWallet { data }) {
                Ok(ActionOutput::Imported(n)) => {
                    let _ = writeln!(out, "wallet imported with {n} credentials");
                    Ok(EXIT_OK)
                }
                Ok(other) => Err(Failure(EXIT_SCENARIO, format!("unexpected outcome {other:?}"))),
                Err(ScenarioError::StepFailed { cause, .. }) => Err(Failure(EXIT_IO, format!("{}: {cause}", file.display()))),
                Err(e) => Err(e.into()),
            }
        }
    }
}

fn print_checks(out: &mut dyn Write, result: &VerificationResult) {
    let _ = writeln!(out, "request {}: {}", result.request_id.to_hex(), if result.accepted { "accepted" } else { "rejected" });
    for c in &result.checks {
        let mark = if c.passed { "ok  " } else { "FAIL" };
        match &c.detail {
            Some(d) if !c.passed => {
                let _ = writeln!(out, "  {mark} {:<12} {d}", c.check.name());
            }
            _ => {
                let _ = writeln!(out, "  {mark} {}", c.check.name());
            }
        }
    }
    for (name, value) in &result.disclosed_values {
        let _ = writeln!(out, "  {name} = {value}");
    }
}

/// Entry point for the binary.
pub fn main_with_env() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
