use solida_core::audit::audit;
use solida_core::{CryptoKind, CryptoProvider, RealCrypto, SimCrypto};
use solida_simnet::presets::{adversarial, lemma1_tight};
use solida_simnet::scenario::{ByzantineSpec, MinerStrategy, MiningMode, Scenario, SchedulerMode, StrategyKind};
use solida_simnet::{run_scenario, RunOutput};

fn byz(member: usize, strategy: StrategyKind) -> ByzantineSpec {
    ByzantineSpec { member, strategy, crash_at: None }
}

fn exact(f: usize, slots: u64) -> Scenario {
    let mut sc = Scenario::basic(f, 1.0);
    sc.network.scheduler = SchedulerMode::Max;
    sc.network.base_latency = 1.0;
    sc.slots = slots;
    sc.duration = 500.0;
    sc
}

fn assert_checks(out: &RunOutput) {
    for c in &out.report.checks {
        assert!(c.passed, "{}: {}", c.name, c.detail);
    }
    assert!(out.report.violations.is_empty(), "{:?}", out.report.violations);
}

#[test]
fn silent_leader_is_replaced_after_the_slot_timer() {
    let mut sc = exact(1, 3);
    sc.byzantine = vec![byz(0, StrategyKind::Silent)];
    let out = run_scenario(sc).unwrap();
    assert_checks(&out);
    let recs = out.trace.records();
    let first_vc = recs.iter().find(|r| r.event == "view_change").unwrap();
    assert_eq!(first_vc.time, 4_000_000_000);
    // Every slot is decided in the second view of the configuration.
    for r in recs.iter().filter(|r| r.event == "commit") {
        assert_eq!(r.view.unwrap().to_string(), "(1,0,1)");
    }
}

#[test]
fn equivocating_leader_cannot_split_the_committee() {
    let mut sc = exact(2, 6);
    sc.byzantine = vec![byz(0, StrategyKind::Equivocating)];
    sc.load.clients = 3;
    sc.load.tx_rate = 5.0;
    let out = run_scenario(sc).unwrap();
    assert_checks(&out);
    // Neither half can gather a prepare quorum, so the first view times out.
    let recs = out.trace.records();
    assert!(recs.iter().any(|r| r.event == "view_change"));
    assert!(recs
        .iter()
        .filter(|r| r.event == "commit")
        .all(|r| r.view.unwrap().to_string() != "(1,0,0)"));
}

#[test]
fn crashed_members_up_to_f_do_not_stall() {
    let mut sc = exact(2, 8);
    sc.byzantine = vec![
        ByzantineSpec { member: 1, strategy: StrategyKind::Crash, crash_at: Some(3.0) },
        ByzantineSpec { member: 6, strategy: StrategyKind::Crash, crash_at: Some(0.0) },
    ];
    let out = run_scenario(sc).unwrap();
    assert_checks(&out);
}

#[test]
fn lemma1_bound_is_tight() {
    for f in [1, 3] {
        let out = run_scenario(lemma1_tight(f)).unwrap();
        assert_checks(&out);
        assert_eq!(out.report.reconfig_count, 3);
        let lags: Vec<f64> = out
            .report
            .races
            .iter()
            .filter(|r| r.config >= 3)
            .map(|r| r.honest_learned.unwrap() - r.adversary_learned.unwrap())
            .collect();
        assert!(!lags.is_empty());
        let worst = lags.iter().cloned().fold(f64::MIN, f64::max);
        assert!((worst - 2.0).abs() < 1e-9, "f={f}: lags {lags:?}");
    }
}

#[test]
fn withheld_pows_keep_the_committee_safe() {
    let mut sc = adversarial(1);
    sc.adversary.miner = MinerStrategy::PowWithholder;
    sc.adversary.hold = 3.0;
    sc.rho = 0.3;
    let out = run_scenario(sc).unwrap();
    assert!(out.report.safety_ok);
    assert!(out.report.check("liveness").unwrap().passed);
    assert!(out.trace.records().iter().any(|r| r.event == "pow_withheld"));
    assert!(out.report.pow.adversary > 0);
}

fn provider(kind: CryptoKind) -> Box<dyn CryptoProvider> {
    match kind {
        CryptoKind::Sim => Box::new(SimCrypto),
        CryptoKind::Real => Box::new(RealCrypto),
    }
}

#[test]
fn exports_pass_audit_under_both_providers() {
    for (seed, kind, mining) in [
        (0, CryptoKind::Sim, MiningMode::Rate),
        (1, CryptoKind::Real, MiningMode::Rate),
        (2, CryptoKind::Sim, MiningMode::Pow),
        (3, CryptoKind::Real, MiningMode::Pow),
    ] {
        let mut sc = adversarial(seed);
        sc.crypto = kind;
        sc.mining = mining;
        let out = run_scenario(sc).unwrap();
        assert_checks(&out);
        let rep = audit(&out.export, provider(kind).as_ref()).unwrap();
        assert_eq!(rep.reconfigurations, out.report.reconfig_count);
        assert!(rep.reconfigurations >= 3);
    }
}

#[test]
fn export_with_a_missing_slot_fails_audit() {
    let out = run_scenario(adversarial(0)).unwrap();
    let mut export = out.export.clone();
    assert!(audit(&export, &SimCrypto).is_ok());
    export.entries.remove(1);
    assert!(audit(&export, &SimCrypto).is_err());
}
