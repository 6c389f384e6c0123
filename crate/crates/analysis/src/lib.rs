//! Security calculations for PoW-elected rolling committees.
//!
//! All probabilities are plain `f64`. Binomial tails are summed in log space
//! outward from the largest term, which keeps relative error far below the
//! 2^-40 scale the committee-size table needs.

use serde::Serialize;
use statrs::function::factorial::ln_binomial;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("parameter out of range: {0}")]
    Domain(&'static str),
    #[error(
        "effective adversarial mining power {0} is at least 1/3: the committee-based approach becomes impractical"
    )]
    Impractical(f64),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

fn check_race_params(rho: f64, delta: f64, d: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rho) {
        return Err(AnalysisError::Domain("rho must lie in [0, 1)"));
    }
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(AnalysisError::Domain("delta must be non-negative"));
    }
    if !(d > 0.0) || !d.is_finite() {
        return Err(AnalysisError::Domain("D must be positive"));
    }
    Ok(())
}

/// `rho' = 1 - (1 - rho) exp(-(2 rho + 8) delta / D)`.
pub fn effective_mining_power(rho: f64, delta: f64, d: f64) -> Result<f64> {
    check_race_params(rho, delta, d)?;
    // rho + (1 - rho)(1 - e^-x), exact at delta = 0.
    Ok(rho - (1.0 - rho) * (-(2.0 * rho + 8.0) * delta / d).exp_m1())
}

/// The three independent events an honest miner needs to win a
/// reconfiguration race, and their product.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RaceProbabilities {
    /// No adversarial PoW during the 2Δ head start.
    pub x: f64,
    /// The first PoW after both sides know the puzzle is honest.
    pub y: f64,
    /// No PoW at all during the 8Δ the honest leader needs.
    pub z: f64,
    pub honest_win: f64,
}

pub fn race_probabilities(rho: f64, delta: f64, d: f64) -> Result<RaceProbabilities> {
    check_race_params(rho, delta, d)?;
    let x = poisson_pmf(0, 2.0 * delta * rho / d);
    let y = 1.0 - rho;
    let z = poisson_pmf(0, 8.0 * delta / d);
    Ok(RaceProbabilities {
        x,
        y,
        z,
        honest_win: x * y * z,
    })
}

/// `lambda^k e^-lambda / k!`.
pub fn poisson_pmf(k: u64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let ln_fact = statrs::function::factorial::ln_factorial(k);
    (k as f64 * lambda.ln() - lambda - ln_fact).exp()
}

/// `Pr(Binom(n, p) >= t)`.
pub fn binomial_tail(n: u64, p: f64, t: u64) -> f64 {
    assert!((0.0..=1.0).contains(&p), "p must be a probability");
    if t == 0 {
        return 1.0;
    }
    if t > n {
        return 0.0;
    }
    if p == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return 1.0;
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let ln_term = |k: u64| ln_binomial(n, k) + k as f64 * lp + (n - k) as f64 * lq;
    // Largest term of the tail: the mode if it lies inside, else t.
    let mode = (((n + 1) as f64) * p).floor() as u64;
    let peak = mode.clamp(t, n);
    let ln_peak = ln_term(peak);
    let ratio_up = |k: u64| ((n - k) as f64 / (k + 1) as f64) * (p / (1.0 - p));
    let mut sum = 1.0;
    // Upward from the peak.
    let mut term = 1.0;
    let mut k = peak;
    while k < n {
        term *= ratio_up(k);
        k += 1;
        sum += term;
        if term < sum * 1e-18 {
            break;
        }
    }
    // Downward to t.
    let mut term = 1.0;
    let mut k = peak;
    while k > t {
        term /= ratio_up(k - 1);
        k -= 1;
        sum += term;
        if term < sum * 1e-18 {
            break;
        }
    }
    (ln_peak + sum.ln()).exp().min(1.0)
}

/// Smallest `n = 3f + 1` with `Pr(Binom(n, rho') >= f + 1) <= 2^-k`.
pub fn required_committee_size(rho_prime: f64, k: u32) -> Result<u64> {
    if !(rho_prime > 0.0) {
        return Err(AnalysisError::Domain("rho' must be positive"));
    }
    if rho_prime >= 1.0 / 3.0 {
        return Err(AnalysisError::Impractical(rho_prime));
    }
    if k == 0 {
        return Err(AnalysisError::Domain("k must be positive"));
    }
    let target = 2f64.powi(-(k as i32));
    let mut f = 1u64;
    loop {
        let n = 3 * f + 1;
        if binomial_tail(n, rho_prime, f + 1) <= target {
            return Ok(n);
        }
        f += 1;
    }
}

/// `exp(n (1 - 3 rho') ln(3 rho') / 6)`, an upper bound on `Pr(Q >= n/3)`.
pub fn chernoff_bound(n: u64, rho_prime: f64) -> Result<f64> {
    if !(rho_prime > 0.0) {
        return Err(AnalysisError::Domain("rho' must be positive"));
    }
    if rho_prime >= 1.0 / 3.0 {
        return Err(AnalysisError::Impractical(rho_prime));
    }
    Ok((n as f64 * (1.0 - 3.0 * rho_prime) * (3.0 * rho_prime).ln() / 6.0).exp())
}

pub const TABLE2_K: [u32; 5] = [20, 25, 30, 35, 40];

/// Printed rows: `(rho, rounded rho', sizes for TABLE2_K)`.
pub const TABLE2_PUBLISHED: [(f64, f64, [u64; 5]); 4] = [
    (0.14, 0.20, [232, 298, 367, 439, 508]),
    (0.20, 0.25, [649, 841, 1036, 1231, 1423]),
    (0.23, 0.28, [1657, 2149, 2644, 3142, 3580]),
    (0.25, 0.30, [4366, 5650, 6949, 8248, 9256]),
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Table2Cell {
    pub rho: f64,
    pub rho_prime: f64,
    pub k: u32,
    pub n: u64,
    pub published: u64,
    pub delta: i64,
}

/// Recompute every cell from the rounded `rho'` of its row.
pub fn table2() -> Vec<Table2Cell> {
    let mut out = Vec::new();
    for (rho, rho_prime, row) in TABLE2_PUBLISHED {
        for (k, published) in TABLE2_K.into_iter().zip(row) {
            let n = required_committee_size(rho_prime, k).expect("table rows are below 1/3");
            out.push(Table2Cell {
                rho,
                rho_prime,
                k,
                n,
                published,
                delta: n as i64 - published as i64,
            });
        }
    }
    out
}
