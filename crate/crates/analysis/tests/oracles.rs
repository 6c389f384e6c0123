//! Independent oracles for the security calculations: exact rational
//! binomial tails in big integers, and property tests for the identities
//! the closed forms must satisfy.

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use proptest::prelude::*;
use solida_analysis::*;

/// `Pr(Binom(n, a/b) >= t) * b^n` as an exact integer, plus `b^n`.
fn exact_tail_scaled(n: u64, a: u64, b: u64, t: u64) -> (BigUint, BigUint) {
    let denom = BigUint::from(b).pow(n as u32);
    if t > n {
        return (BigUint::zero(), denom);
    }
    // term_k = C(n,k) a^k (b-a)^(n-k), stepped exactly from k = 0.
    let mut term = BigUint::from(b - a).pow(n as u32);
    let mut sum = BigUint::zero();
    for k in 0..=n {
        if k >= t {
            sum += &term;
        }
        if k < n {
            term = term * (n - k) * a / ((k + 1) * (b - a));
        }
    }
    (sum, denom)
}

fn exact_tail(n: u64, a: u64, b: u64, t: u64) -> f64 {
    let (num, den) = exact_tail_scaled(n, a, b, t);
    if num.is_zero() {
        return 0.0;
    }
    // Integer quotient with ~64 significant bits, then rescale.
    let s = (den.bits() + 64).saturating_sub(num.bits());
    if s > 1100 {
        return 0.0;
    }
    let q = ((num << s) / den).to_f64().unwrap();
    q * 2f64.powi(-(s as i32))
}

/// Whether `Pr(Binom(n, a/b) >= f+1) <= 2^-k` holds exactly.
fn bound_holds_exactly(n: u64, a: u64, b: u64, k: u32) -> bool {
    let f = (n - 1) / 3;
    let (num, den) = exact_tail_scaled(n, a, b, f + 1);
    (num << k as usize) <= den
}

#[test]
fn four_coins_enumeration() {
    let (num, den) = exact_tail_scaled(4, 1, 2, 2);
    assert_eq!((num, den), (BigUint::from(11u32), BigUint::from(16u32)));
}

#[test]
fn log_space_tail_matches_exact_arithmetic() {
    let ps = [(1, 10), (1, 5), (1, 4), (7, 25), (3, 10), (1, 2)];
    for n in [13u64, 100, 301, 1000, 4366] {
        for (a, b) in ps {
            let p = a as f64 / b as f64;
            for t in [1, n / 10, n / 4, (n - 1) / 3 + 1, n / 2, n] {
                let exact = exact_tail(n, a, b, t);
                let fast = binomial_tail(n, p, t);
                if exact == 0.0 {
                    assert!(fast < 1e-300, "n={n} p={p} t={t}");
                    continue;
                }
                let rel = ((fast - exact) / exact).abs();
                assert!(rel < 1e-9, "n={n} p={p} t={t}: {fast} vs {exact} (rel {rel})");
            }
        }
    }
}

#[test]
fn effective_mining_power_columns() {
    let dd = 1.0 / 120.0;
    for (rho, expected) in [(0.14, 0.1973), (0.20, 0.2541), (0.23, 0.2824), (0.25, 0.3013)] {
        let rp = effective_mining_power(rho, dd, 1.0).unwrap();
        assert!((rp - expected).abs() < 5e-4, "rho={rho}: {rp}");
    }
}

/// Committee sizes computed by the float scan, then frozen. Each boundary
/// is re-checked below in exact arithmetic.
const FROZEN: [[u64; 5]; 4] = [
    [232, 298, 367, 439, 508],
    [649, 841, 1036, 1231, 1426],
    [1657, 2149, 2644, 3142, 3640],
    [4363, 5650, 6949, 8254, 9565],
];

#[test]
fn table2_matches_frozen_grid() {
    let cells = table2();
    assert_eq!(cells.len(), 20);
    for (i, c) in cells.iter().enumerate() {
        assert_eq!(c.n, FROZEN[i / 5][i % 5], "rho'={} k={}", c.rho_prime, c.k);
        assert_eq!(c.delta, c.n as i64 - c.published as i64);
    }
}

#[test]
fn table2_boundaries_hold_in_exact_arithmetic() {
    let rows = [(1u64, 5u64), (1, 4), (7, 25), (3, 10)];
    for (r, (a, b)) in rows.into_iter().enumerate() {
        for (j, k) in TABLE2_K.into_iter().enumerate() {
            let n = FROZEN[r][j];
            assert!(bound_holds_exactly(n, a, b, k), "n={n} fails at k={k}");
            assert!(!bound_holds_exactly(n - 3, a, b, k), "n-3={} already passes at k={k}", n - 3);
        }
    }
}

#[test]
fn printed_cells_that_differ_fail_the_bound_exactly() {
    // The printed sizes below the computed ones do not meet 2^-k.
    assert!(!bound_holds_exactly(3580, 7, 25, 40));
    assert!(!bound_holds_exactly(8248, 3, 10, 35));
    assert!(!bound_holds_exactly(9256, 3, 10, 40));
}

#[test]
fn chernoff_dominates_exact_tail_on_grid() {
    for n in [13u64, 100, 301, 1000] {
        for (a, b) in [(1u64, 10u64), (1, 5), (3, 10)] {
            let p = a as f64 / b as f64;
            let t = n.div_ceil(3);
            let bound = chernoff_bound(n, p).unwrap();
            assert!(bound >= exact_tail(n, a, b, t), "n={n} p={p}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn decomposition_identity(rho in 0.0f64..0.99, dd in 0.0f64..0.5) {
        let rp = effective_mining_power(rho, dd, 1.0).unwrap();
        let r = race_probabilities(rho, dd, 1.0).unwrap();
        prop_assert!((1.0 - rp - r.x * r.y * r.z).abs() < 1e-12);
        prop_assert!((r.honest_win - r.x * r.y * r.z).abs() < 1e-15);
        prop_assert!(rp >= rho && rp < 1.0);
    }

    #[test]
    fn monotone_in_rho_and_delay(rho in 0.0f64..0.9, dd in 0.001f64..0.5, step in 0.001f64..0.05) {
        let base = effective_mining_power(rho, dd, 1.0).unwrap();
        prop_assert!(effective_mining_power(rho + step, dd, 1.0).unwrap() > base);
        prop_assert!(effective_mining_power(rho, dd + step, 1.0).unwrap() > base);
    }

    #[test]
    fn chernoff_dominates_float_tail(n in 4u64..3000, rp in 0.01f64..0.33) {
        let bound = chernoff_bound(n, rp).unwrap();
        let tail = binomial_tail(n, rp, n.div_ceil(3));
        prop_assert!(bound >= tail * (1.0 - 1e-9));
    }

    #[test]
    fn chernoff_decreasing_in_n(n in 1u64..5000, rp in 0.01f64..0.33) {
        let (next, here) = (chernoff_bound(n + 1, rp).unwrap(), chernoff_bound(n, rp).unwrap());
        // Both may underflow to zero for tiny rho'.
        prop_assert!(next < here || here == 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn committee_size_non_decreasing(k in 1u32..14, rp in 0.02f64..0.25, dk in 0u32..4, dr in 0.0f64..0.05) {
        let n = required_committee_size(rp, k).unwrap();
        prop_assert!(required_committee_size(rp, k + dk).unwrap() >= n);
        prop_assert!(required_committee_size(rp + dr, k).unwrap() >= n);
        prop_assert_eq!(n % 3, 1);
    }
}
