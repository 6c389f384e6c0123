//! Post-run invariant checks.

use std::collections::{BTreeMap, BTreeSet};

use solida_core::{Ledger, PublicKey, Time};

use crate::mining::Population;
use crate::report::{CheckResult, Violation};
use crate::scenario::{Scenario, SchedulerMode};
use crate::sim::Observations;

pub struct NodeInfo {
    pub label: String,
    pub pk: PublicKey,
    pub honest: bool,
    pub miner: bool,
}

pub struct CheckInput<'a> {
    pub sc: &'a Scenario,
    pub data: &'a Observations,
    pub ledger: &'a Ledger,
    pub nodes: &'a [NodeInfo],
    pub end: Time,
    pub targets_met: bool,
}

/// Slot-progress budget: f+1 failed views of 14Δ each plus the 4Δ of the
/// view that finally decides.
pub fn liveness_bound(f: usize, delta: f64, pows: usize) -> f64 {
    ((f + 1) as f64 * 14.0 + 4.0 + 14.0 * pows as f64) * delta
}

impl CheckInput<'_> {
    fn fault_free(&self) -> bool {
        self.sc.byzantine.is_empty() && !self.nodes.iter().any(|n| n.miner && !n.honest)
    }

    fn max_adversary_seats(&self) -> usize {
        let adversarial: BTreeSet<_> = self.nodes.iter().filter(|n| !n.honest).map(|n| n.pk).collect();
        (1..=self.ledger.config())
            .filter_map(|c| self.ledger.committee_for(c))
            .map(|w| w.keys().filter(|pk| adversarial.contains(pk)).count())
            .max()
            .unwrap_or(0)
    }

    fn pows_in(&self, from: Time, to: Time) -> usize {
        self.data
            .pows
            .iter()
            .filter(|p| p.published && p.time > from && p.time <= to)
            .count()
    }
}

pub fn evaluate(inp: &CheckInput<'_>) -> (Vec<CheckResult>, Vec<Violation>) {
    let mut checks = Vec::new();
    let mut violations = Vec::new();
    let delta = inp.sc.delta;
    let within_f = inp.max_adversary_seats() <= inp.sc.f;

    // Safety: no two honest commits for one slot differ, and no slot/view
    // has two accept certificates.
    let mut by_slot: BTreeMap<u64, BTreeMap<_, BTreeSet<usize>>> = BTreeMap::new();
    for c in &inp.data.commits {
        by_slot.entry(c.slot).or_default().entry(c.digest).or_default().insert(c.node);
    }
    let mut unsafe_count = 0;
    for (slot, ds) in &by_slot {
        if ds.len() > 1 {
            unsafe_count += 1;
            violations.push(Violation::ConflictingCommit {
                slot: *slot,
                digests: ds.keys().map(|d| d.to_hex()).collect(),
                nodes: ds.values().flatten().map(|&i| inp.nodes[i].label.clone()).collect(),
            });
        }
    }
    for ((slot, view), ds) in &inp.data.accepted {
        if ds.len() > 1 {
            unsafe_count += 1;
            violations.push(Violation::ConflictingAccept {
                slot: *slot,
                view: view.to_string(),
                digests: ds.iter().map(|d| d.to_hex()).collect(),
            });
        }
    }
    checks.push(CheckResult {
        name: "safety",
        applicable: true,
        passed: unsafe_count == 0,
        detail: format!("{} slots committed by honest nodes, {unsafe_count} conflicts", by_slot.len()),
    });

    // Liveness: every gap between consecutive decisions stays within budget.
    let demand = inp.sc.propose_empty || (inp.sc.load.tx_rate > 0.0 && inp.sc.load.clients >= 2);
    if !demand {
        checks.push(CheckResult::skipped("liveness", "no proposals are demanded"));
    } else if !within_f || inp.sc.model_delta_violating {
        checks.push(CheckResult::skipped("liveness", "outside the fault or timing model"));
    } else {
        let mut worst: f64 = 0.0;
        let mut failed = 0;
        let mut prev = Time::ZERO;
        let mut points: Vec<(u64, Time)> = inp.data.first_commit.iter().map(|(s, t)| (*s, *t)).collect();
        if !inp.targets_met {
            // The open interval after the last decision counts too.
            points.push((inp.ledger.len() + 1, inp.end));
        }
        for (slot, t) in points {
            let gap = t.saturating_sub(prev).as_secs_f64();
            let bound = liveness_bound(inp.sc.f, delta, inp.pows_in(prev, t));
            worst = worst.max(gap / bound);
            if gap > bound + 1e-9 {
                failed += 1;
                violations.push(Violation::Liveness { slot, gap, bound });
            }
            prev = t;
        }
        checks.push(CheckResult {
            name: "liveness",
            applicable: true,
            passed: failed == 0,
            detail: format!("worst gap is {:.3} of its bound", worst),
        });
    }

    if inp.sc.model_delta_violating {
        checks.push(CheckResult::skipped("delta_bound", "run is flagged delta-violating"));
    } else {
        let ok = inp.data.delta_violations == 0;
        if !ok {
            violations.push(Violation::DeltaBound {
                count: inp.data.delta_violations,
                worst: inp.data.worst_delay.as_secs_f64(),
            });
        }
        checks.push(CheckResult {
            name: "delta_bound",
            applicable: true,
            passed: ok,
            detail: format!(
                "{} honest deliveries, worst {:.6}s",
                inp.data.honest_deliveries,
                inp.data.worst_delay.as_secs_f64()
            ),
        });
    }

    // Honest miners learn each puzzle at most 2Δ after the adversary.
    if !inp.sc.adversary.observer || !within_f || inp.sc.model_delta_violating {
        checks.push(CheckResult::skipped("lemma1", "no adversary observer or outside the model"));
    } else {
        let mut worst = f64::NEG_INFINITY;
        let mut compared = 0;
        let mut ok = true;
        for (&(c, pop), &adv) in &inp.data.learned {
            if pop != Population::Adversary || c < 2 {
                continue;
            }
            let Some(&honest) = inp.data.learned.get(&(c, Population::Honest)) else { continue };
            compared += 1;
            let gap = honest.as_secs_f64() - adv.as_secs_f64();
            worst = worst.max(gap);
            if gap > 2.0 * delta + 1e-9 {
                ok = false;
                violations.push(Violation::Lemma1 { config: c, gap });
            }
        }
        checks.push(CheckResult {
            name: "lemma1",
            applicable: compared > 0,
            passed: ok,
            detail: if compared > 0 {
                format!("{compared} puzzles, worst lag {:.3}Δ", worst / delta)
            } else {
                "no reconfiguration".into()
            },
        });
    }

    let proximity_model = matches!(inp.sc.network.scheduler, SchedulerMode::Base | SchedulerMode::Max);
    if !inp.fault_free() || !proximity_model || inp.sc.model_delta_violating {
        checks.push(CheckResult::skipped("notify_proximity", "needs a fault-free run with a fixed-delay scheduler"));
    } else {
        let mut per_slot: BTreeMap<u64, (Time, Time)> = BTreeMap::new();
        for c in &inp.data.commits {
            if c.slot > inp.ledger.len() || !inp.ledger.committee_for_slot(c.slot).contains(&inp.nodes[c.node].pk) {
                continue;
            }
            let e = per_slot.entry(c.slot).or_insert((c.time, c.time));
            e.0 = e.0.min(c.time);
            e.1 = e.1.max(c.time);
        }
        let mut worst: f64 = 0.0;
        let mut ok = true;
        for (slot, (lo, hi)) in per_slot {
            let spread = hi.saturating_sub(lo).as_secs_f64();
            worst = worst.max(spread);
            if spread > delta + 1e-9 {
                ok = false;
                violations.push(Violation::NotifyProximity { slot, spread });
            }
        }
        checks.push(CheckResult {
            name: "notify_proximity",
            applicable: true,
            passed: ok,
            detail: format!("worst spread {:.3}Δ", worst / delta),
        });
    }

    let exact_delta = inp.sc.network.bandwidth_bps.is_none()
        && (inp.sc.network.scheduler == SchedulerMode::Max
            || (inp.sc.network.scheduler == SchedulerMode::Base && inp.sc.network.base_latency == delta));
    if !inp.fault_free() || !exact_delta {
        checks.push(CheckResult::skipped("non_accusation", "needs a fault-free run with every delay exactly Δ"));
    } else {
        for (i, t, v) in &inp.data.view_changes {
            violations.push(Violation::Accusation {
                node: inp.nodes[*i].label.clone(),
                view: v.to_string(),
                time: t.as_secs_f64(),
            });
        }
        checks.push(CheckResult {
            name: "non_accusation",
            applicable: true,
            passed: inp.data.view_changes.is_empty(),
            detail: format!("{} honest view changes", inp.data.view_changes.len()),
        });
    }

    if inp.sc.slots == 0 && inp.sc.reconfigurations == 0 {
        checks.push(CheckResult::skipped("targets", "no targets set"));
    } else {
        if !inp.targets_met {
            violations.push(Violation::Targets {
                slots: inp.ledger.len(),
                reconfigurations: inp.ledger.config() - 1,
            });
        }
        checks.push(CheckResult {
            name: "targets",
            applicable: true,
            passed: inp.targets_met,
            detail: format!(
                "{}/{} slots, {}/{} reconfigurations",
                inp.ledger.len(),
                inp.sc.slots,
                inp.ledger.config() - 1,
                inp.sc.reconfigurations
            ),
        });
    }

    (checks, violations)
}
