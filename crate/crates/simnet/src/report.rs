//! Machine-readable run results.

use serde::Serialize;

use crate::mining::Population;

/// The fields repeated as the last trace line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub safety_ok: bool,
    pub slots_committed: u64,
    pub reconfig_count: u64,
    pub adversary_seats: usize,
    pub honest_seats: usize,
    /// Seconds.
    pub max_commit_latency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    ConflictingCommit {
        slot: u64,
        digests: Vec<String>,
        nodes: Vec<String>,
    },
    ConflictingAccept {
        slot: u64,
        view: String,
        digests: Vec<String>,
    },
    Liveness {
        slot: u64,
        gap: f64,
        bound: f64,
    },
    DeltaBound {
        count: u64,
        worst: f64,
    },
    Lemma1 {
        config: u64,
        gap: f64,
    },
    NotifyProximity {
        slot: u64,
        spread: f64,
    },
    Accusation {
        node: String,
        view: String,
        time: f64,
    },
    Targets {
        slots: u64,
        reconfigurations: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub applicable: bool,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    pub fn skipped(name: &'static str, why: impl Into<String>) -> Self {
        Self {
            name,
            applicable: false,
            passed: true,
            detail: why.into(),
        }
    }

    pub fn ok(&self) -> bool {
        !self.applicable || self.passed
    }
}

/// One completed reconfiguration, i.e. one mining race.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RaceRecord {
    /// The configuration this reconfiguration created.
    pub config: u64,
    pub winner: Population,
    pub member: String,
    pub found_at: f64,
    pub committed_at: f64,
    pub latency: f64,
    /// When each population learned the puzzle that was raced.
    pub honest_learned: Option<f64>,
    pub adversary_learned: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PowCounts {
    pub honest: u64,
    pub adversary: u64,
    pub published: u64,
    pub discarded: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramBucket {
    /// Upper bound in multiples of Δ; `None` is unbounded.
    pub upto_deltas: Option<u64>,
    pub count: u64,
}

pub const HISTOGRAM_BOUNDS: [u64; 5] = [4, 8, 16, 32, 64];

pub fn histogram(latencies: &[f64], delta: f64) -> Vec<HistogramBucket> {
    let mut buckets: Vec<_> = HISTOGRAM_BOUNDS
        .iter()
        .map(|b| HistogramBucket {
            upto_deltas: Some(*b),
            count: 0,
        })
        .chain(std::iter::once(HistogramBucket {
            upto_deltas: None,
            count: 0,
        }))
        .collect();
    for &l in latencies {
        let i = HISTOGRAM_BOUNDS
            .iter()
            .position(|b| l <= *b as f64 * delta)
            .unwrap_or(HISTOGRAM_BOUNDS.len());
        buckets[i].count += 1;
    }
    buckets
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub scenario_digest: String,
    pub seed: u64,
    pub safety_ok: bool,
    pub slots_committed: u64,
    pub reconfig_count: u64,
    pub adversary_seats: usize,
    pub honest_seats: usize,
    pub max_commit_latency: f64,
    pub end_time: f64,
    pub targets_met: bool,
    pub stop_reason: String,
    pub pow: PowCounts,
    pub races: Vec<RaceRecord>,
    pub latency_histogram: Vec<HistogramBucket>,
    pub checks: Vec<CheckResult>,
    pub violations: Vec<Violation>,
}

impl RunReport {
    pub fn summary(&self) -> Summary {
        Summary {
            safety_ok: self.safety_ok,
            slots_committed: self.slots_committed,
            reconfig_count: self.reconfig_count,
            adversary_seats: self.adversary_seats,
            honest_seats: self.honest_seats,
            max_commit_latency: self.max_commit_latency,
        }
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn all_checks_passed(&self) -> bool {
        self.checks.iter().all(CheckResult::ok)
    }

    pub fn adversary_wins(&self) -> usize {
        self.races.iter().filter(|r| r.winner == Population::Adversary).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_buckets_by_delta_multiples() {
        let h = histogram(&[0.5, 4.0, 4.1, 100.0], 1.0);
        let counts: Vec<_> = h.iter().map(|b| b.count).collect();
        assert_eq!(counts, vec![2, 1, 0, 0, 0, 1]);
    }
}
