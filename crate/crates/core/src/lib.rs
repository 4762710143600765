//! Credential passporting for clinicians.
//!
//! Issuers, verifiers and a single holder exchange signed, salted-digest
//! credentials over peer connections. Public identifiers and schemas live on a
//! shared registry; personal data never does. The holder wallet discloses only
//! requested attributes and proves possession with a link secret that stays
//! local. Every action lands in a hash-chained audit log.
//!
//! [`scenario`] drives a whole career through the [`agents::Ecosystem`] and
//! reports time spent and principle checks. [`cli`] backs the `cpx` binary.
//!
//! ```
//! use cpx::crypto::GroupParams;
//! use cpx::scenario::{run_scenario, EcosystemConfig, ScenarioScript, TimeModel};
//!
//! let run = run_scenario(
//!     &EcosystemConfig::default(),
//!     &ScenarioScript::rotation_only(),
//!     GroupParams::toy(),
//!     7,
//!     &TimeModel::default(),
//! )
//! .unwrap();
//! assert!(run.principles.machine_checkable_pass);
//! ```

pub mod agents;
pub mod audit;
pub mod b64;
pub mod cli;
pub mod clock;
pub mod connections;
pub mod credentials;
pub mod crypto;
pub mod encoding;
pub mod ids;
pub mod presentation;
pub mod registry;
pub mod scenario;
