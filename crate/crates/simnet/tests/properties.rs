use proptest::prelude::*;
use solida_simnet::presets::{adversarial, fault_free_exact_delta};
use solida_simnet::run_scenario;
use solida_simnet::scenario::SchedulerMode;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn adversarial_runs_are_safe_and_live(seed in 0u64..1_000_000) {
        let r = run_scenario(adversarial(seed)).unwrap().report;
        for c in &r.checks {
            prop_assert!(c.ok(), "seed {seed}: {} failed: {}", c.name, c.detail);
        }
        prop_assert!(r.safety_ok);
        prop_assert!(r.reconfig_count >= 3);
        prop_assert!(r.adversary_seats <= (r.adversary_seats + r.honest_seats - 1) / 3);
    }

    #[test]
    fn random_delays_keep_lemma1(seed in 0u64..1_000_000) {
        let mut sc = adversarial(seed);
        sc.network.scheduler = SchedulerMode::Random;
        let r = run_scenario(sc).unwrap().report;
        let l = r.check("lemma1").unwrap();
        prop_assert!(l.ok(), "{}", l.detail);
        for race in &r.races {
            if let (Some(h), Some(a)) = (race.honest_learned, race.adversary_learned) {
                prop_assert!(h - a <= 2.0 + 1e-9);
            }
        }
    }

    #[test]
    fn honest_leaders_are_never_accused(seed in 0u64..1_000_000, f in 1usize..5, d in prop::sample::select(vec![5.0, 15.0, 40.0])) {
        let r = run_scenario(fault_free_exact_delta(seed, f, d)).unwrap().report;
        let c = r.check("non_accusation").unwrap();
        prop_assert!(c.applicable);
        prop_assert!(c.passed, "seed {seed}: {}", c.detail);
        prop_assert!(r.all_checks_passed());
    }
}
