//! Scenario families used by the test suites and the acceptance run.

use crate::scenario::{ByzantineSpec, Scenario, SchedulerMode, StrategyKind};

/// Member strategies drawn for adversarial runs.
pub const ADVERSARIAL_STRATEGIES: [StrategyKind; 4] = [
    StrategyKind::Silent,
    StrategyKind::Equivocating,
    StrategyKind::MaxDelay,
    StrategyKind::Crash,
];

/// f Byzantine genesis members, adversarial miners keeping at most f seats,
/// every delay stretched to Δ, at least three reconfigurations.
pub fn adversarial(seed: u64) -> Scenario {
    let f = [1usize, 2, 4][(seed % 3) as usize];
    let n = 3 * f + 1;
    let mut sc = Scenario::basic(f, 1.0);
    sc.name = format!("adversarial-n{n}-{seed}");
    sc.seed = seed;
    sc.network.scheduler = SchedulerMode::Max;
    sc.network.base_latency = 0.2;
    sc.d = Some(20.0);
    sc.rho = 0.25;
    sc.slots = 10;
    sc.reconfigurations = 3;
    sc.duration = 4000.0;
    sc.load.clients = 4;
    sc.load.tx_rate = 1.0;
    sc.adversary.member_strategies = ADVERSARIAL_STRATEGIES.to_vec();
    let mut members: Vec<usize> = (0..f).map(|i| (seed as usize * 7 + i * 3) % n).collect();
    members.sort_unstable();
    members.dedup();
    sc.byzantine = members
        .into_iter()
        .enumerate()
        .map(|(i, member)| ByzantineSpec {
            member,
            strategy: ADVERSARIAL_STRATEGIES[(seed as usize + i) % ADVERSARIAL_STRATEGIES.len()],
            crash_at: None,
        })
        .collect();
    sc
}

/// No faults, honest mining only, every message delayed exactly Δ.
pub fn fault_free_exact_delta(seed: u64, f: usize, d: f64) -> Scenario {
    let mut sc = Scenario::basic(f, 1.0);
    sc.name = format!("fault-free-n{}-{seed}", 3 * f + 1);
    sc.seed = seed;
    sc.network.scheduler = SchedulerMode::Max;
    sc.network.base_latency = 1.0;
    sc.d = Some(d);
    sc.reconfigurations = 4;
    sc.duration = 5000.0;
    sc.load.clients = 4;
    sc.load.tx_rate = if seed % 2 == 0 { 0.0 } else { 2.0 };
    sc
}

/// The worst case for honest puzzle learning: the adversary hears every
/// notify at once and f members hoard theirs, while honest traffic except
/// to one member takes the full Δ. Honest miners then learn each puzzle
/// exactly 2Δ after the adversary.
pub fn lemma1_tight(f: usize) -> Scenario {
    let mut sc = Scenario::basic(f, 1.0);
    sc.name = format!("lemma1-tight-n{}", 3 * f + 1);
    sc.network.scheduler = SchedulerMode::Lemma1Tight;
    sc.network.base_latency = 0.0;
    sc.byzantine = (0..f)
        .map(|i| ByzantineSpec {
            member: 3 * f - i,
            strategy: StrategyKind::NotifyHoarder,
            crash_at: None,
        })
        .collect();
    sc.byzantine.sort_by_key(|b| b.member);
    sc.inject_pow = vec![5.0, 40.0, 80.0];
    sc.reconfigurations = 3;
    sc.duration = 500.0;
    sc
}
