//! Reconfiguration latency under a bandwidth-limited network.
//!
//! One honest PoW is injected into an otherwise idle committee, so the
//! measured latency is purely the reconfiguration round trip: announce,
//! status, proposal, prepare, commit and notify back at the new member.

use serde::Serialize;
use solida_core::Time;

use crate::scenario::{Scenario, SchedulerMode, SizeModel, TraceLevel};
use crate::sim::{Sim, SimError};

pub const COST_DELTA: f64 = 1000.0;
pub const COST_BASE_LATENCY: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostPoint {
    pub n: usize,
    pub bandwidth_bps: Option<f64>,
    /// Seconds from PoW injection to the first notify at the new member.
    pub latency: f64,
    /// Causal depth of that notify.
    pub hops: u32,
}

pub fn cost_scenario(f: usize, bandwidth_bps: Option<f64>, size_model: SizeModel) -> Scenario {
    let mut sc = Scenario::basic(f, COST_DELTA);
    sc.name = format!("cost-n{}", 3 * f + 1);
    sc.propose_empty = false;
    sc.d = None;
    sc.rho = 0.0;
    sc.duration = 1e7;
    sc.slots = 0;
    sc.reconfigurations = 0;
    sc.adversary.observer = false;
    sc.network.base_latency = COST_BASE_LATENCY;
    sc.network.scheduler = SchedulerMode::Base;
    sc.network.bandwidth_bps = bandwidth_bps;
    sc.network.size_model = size_model;
    sc.model_delta_violating = bandwidth_bps.is_some();
    sc.trace = TraceLevel::Off;
    sc
}

/// Latency of the second reconfiguration, whose puzzle carries f+1 notify
/// headers like every later one.
pub fn reconfig_latency(f: usize, bandwidth_bps: Option<f64>, size_model: SizeModel) -> Result<CostPoint, SimError> {
    let sc = cost_scenario(f, bandwidth_bps, size_model);
    let n = sc.n;
    let mut sim = Sim::new(sc)?;
    sim.inject_honest_pow()?;
    let done = sim.run_until(|s| s.observer_ledger().config() >= 2 && s.quiescent())?;
    assert!(done, "first reconfiguration did not complete");

    let t0 = sim.now();
    let finder = sim.inject_honest_pow()?.expect("puzzle(2) is known after quiescence");
    let done = sim.run_until(|s| s.observer_ledger().config() >= 3 && s.quiescent())?;
    assert!(done, "second reconfiguration did not complete");
    let (slot, _) = sim.observer_ledger().creating_decision(3).expect("config 3 exists");
    let (at, hops) = sim.first_notify(finder, slot).expect("the new member hears its notify");
    Ok(CostPoint {
        n,
        bandwidth_bps,
        latency: at.saturating_sub(t0).as_secs_f64(),
        hops,
    })
}

/// Least-squares fit of `y = c n^2` through the origin; returns `(c, R^2)`.
pub fn fit_quadratic(points: &[(f64, f64)]) -> (f64, f64) {
    let sxy: f64 = points.iter().map(|(n, y)| n * n * y).sum();
    let sxx: f64 = points.iter().map(|(n, _)| n.powi(4)).sum();
    let c = sxy / sxx;
    let mean = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
    let ss_tot: f64 = points.iter().map(|(_, y)| (y - mean).powi(2)).sum();
    let ss_res: f64 = points.iter().map(|(n, y)| (y - c * n * n).powi(2)).sum();
    (c, 1.0 - ss_res / ss_tot)
}

pub fn zero_size_latency(hops: u32) -> Time {
    Time::from_secs_f64(COST_BASE_LATENCY) * u64::from(hops)
}
