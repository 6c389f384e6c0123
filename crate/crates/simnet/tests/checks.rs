use solida_core::{Digest, Time, ViewTuple};
use solida_simnet::checks::{evaluate, CheckInput, NodeInfo};
use solida_simnet::mining::Population;
use solida_simnet::presets::adversarial;
use solida_simnet::scenario::{ByzantineSpec, StrategyKind};
use solida_simnet::sim::{CommitRec, Observations};
use solida_simnet::{run_scenario, Scenario, Sim, Violation};

fn infos(sim: &Sim) -> Vec<NodeInfo> {
    sim.nodes()
        .iter()
        .map(|n| NodeInfo { label: n.label.clone(), pk: n.public_key(), honest: n.honest(), miner: false })
        .collect()
}

fn commit(node: usize, slot: u64, d: u8, secs: f64) -> CommitRec {
    CommitRec {
        node,
        slot,
        digest: Digest([d; 32]),
        view: ViewTuple::new(1, 0, 0),
        time: Time::from_secs_f64(secs),
    }
}

fn evaluate_with(sc: Scenario, data: &Observations, end: f64) -> (Vec<Violation>, bool, bool) {
    let sim = Sim::new(sc.clone()).unwrap();
    let nodes = infos(&sim);
    let inp = CheckInput {
        sc: &sc,
        data,
        ledger: sim.reference_ledger(),
        nodes: &nodes,
        end: Time::from_secs_f64(end),
        targets_met: false,
    };
    let (checks, violations) = evaluate(&inp);
    let get = |n: &str| checks.iter().find(|c| c.name == n).unwrap().clone();
    (violations, get("safety").passed, get("liveness").passed)
}

#[test]
fn fabricated_conflict_is_reported() {
    let mut data = Observations::default();
    data.commits = vec![commit(0, 1, 1, 1.0), commit(1, 1, 2, 1.5)];
    data.first_commit.insert(1, Time::from_secs_f64(1.0));
    let (v, safe, _) = evaluate_with(Scenario::basic(1, 1.0), &data, 2.0);
    assert!(!safe);
    assert!(v.iter().any(|v| matches!(v, Violation::ConflictingCommit { slot: 1, .. })));
}

#[test]
fn two_accept_certificates_in_one_view_are_reported() {
    let mut data = Observations::default();
    data.accepted.insert((3, ViewTuple::new(1, 0, 2)), [Digest([1; 32]), Digest([2; 32])].into());
    let (v, safe, _) = evaluate_with(Scenario::basic(1, 1.0), &data, 2.0);
    assert!(!safe);
    assert!(v.iter().any(|v| matches!(v, Violation::ConflictingAccept { slot: 3, .. })));
}

#[test]
fn stalled_run_breaks_liveness() {
    let data = Observations::default();
    let sc = Scenario::basic(1, 1.0);
    // (f+1)*14 + 4 = 32 Δ without any decision.
    let (_, _, live) = evaluate_with(sc.clone(), &data, 32.0);
    assert!(live);
    let (v, _, live) = evaluate_with(sc, &data, 33.0);
    assert!(!live);
    assert!(v.iter().any(|v| matches!(v, Violation::Liveness { .. })));
}

#[test]
fn lemma1_lag_beyond_two_delta_is_reported() {
    let mut data = Observations::default();
    data.learned.insert((2, Population::Adversary), Time::from_secs_f64(10.0));
    data.learned.insert((2, Population::Honest), Time::from_secs_f64(12.5));
    let (v, _, _) = evaluate_with(Scenario::basic(1, 1.0), &data, 20.0);
    assert!(v.iter().any(|v| matches!(v, Violation::Lemma1 { config: 2, .. })));
}

#[test]
fn too_many_byzantine_members_fall_outside_the_model() {
    let mut sc = adversarial(0);
    sc.allow_excess_byzantine = true;
    sc.byzantine = (0..sc.f + 1)
        .map(|member| ByzantineSpec { member, strategy: StrategyKind::Silent, crash_at: None })
        .collect();
    sc.duration = 200.0;
    let out = run_scenario(sc).unwrap();
    let live = out.report.check("liveness").unwrap();
    assert!(!live.applicable, "{}", live.detail);
}
