//! Deterministic discrete-event simulation of solida networks.
//!
//! A [`Scenario`] fixes the committee, network, adversary and workload; a
//! [`Sim`] runs it to a [`RunReport`] plus an optional JSONL trace and a
//! ledger export that `solida audit` can re-verify.

pub mod checks;
pub mod cost;
pub mod mining;
pub mod network;
pub mod presets;
pub mod race;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod strategy;
pub mod trace;

pub use report::{CheckResult, RaceRecord, RunReport, Summary, Violation};
pub use scenario::{Scenario, ScenarioError};
pub use sim::{run_scenario, Role, RunOutput, Sim, SimError};
pub use trace::{Record, Trace};
