//! Runs the default nine-year career and prints the cost table and the
//! compliance report. Pass a directory to also write the trace artifacts.
//!
//!     cargo run --example career_scenario -- /tmp/career

use std::path::PathBuf;
use std::time::Instant;

use cpx::crypto::GroupParams;
use cpx::scenario::{run_scenario, EcosystemConfig, ScenarioScript, Stage, TimeModel};

fn main() {
    let started = Instant::now();
    let run = run_scenario(
        &EcosystemConfig::default(),
        &ScenarioScript::default_career(),
        GroupParams::production(),
        2020,
        &TimeModel::default(),
    )
    .expect("default career completes");

    let trace = &run.trace;
    println!(
        "{} occurrences, {} messages, {} audit events, {} credentials held ({:.1?})\n",
        trace.occurrences.len(),
        trace.messages.len(),
        trace.audit.len(),
        trace.inventory.credentials.len(),
        started.elapsed()
    );
    print!("{}", trace.metrics.render_table());

    let rotation = trace.metrics.row(Stage::Rotation);
    println!(
        "\nper rotation: {:.3} days manual vs {:.4} days with a wallet\n",
        rotation.per_occurrence_baseline_days, rotation.per_occurrence_ssi_days
    );
    print!("{}", run.principles.render_table());

    if let Some(dir) = std::env::args().nth(1).map(PathBuf::from) {
        run.write_dir(&dir).expect("trace written");
        println!("\nartifacts written to {}", dir.display());
    }
}
