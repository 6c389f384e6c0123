//! Poisson mining for the honest and adversarial populations.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    Honest,
    Adversary,
}

/// Exponential waiting time in seconds; `None` for a zero rate.
pub fn exp_wait<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> Option<f64> {
    if rate <= 0.0 {
        return None;
    }
    Some(Exp::new(rate).expect("positive rate").sample(rng))
}

/// Population rates per second: `((1 - rho) / D, rho / D)`.
pub fn rates(rho: f64, d: f64) -> (f64, f64) {
    ((1.0 - rho) / d, rho / d)
}

/// PoW finds for one puzzle, in time order.
///
/// Each population's clock starts when it learns the puzzle. Clocks are
/// memoryless, so after every find the finder's clock is simply resampled.
/// A puzzle change means building a new process.
pub struct MiningProcess<'a, R: Rng> {
    rng: &'a mut R,
    rate: [f64; 2],
    next: [Option<f64>; 2],
}

impl<'a, R: Rng> MiningProcess<'a, R> {
    pub fn new(rng: &'a mut R, rho: f64, d: f64, honest_from: f64, adversary_from: f64) -> Self {
        let (h, a) = rates(rho, d);
        let next = [
            exp_wait(rng, h).map(|w| honest_from + w),
            exp_wait(rng, a).map(|w| adversary_from + w),
        ];
        Self {
            rng,
            rate: [h, a],
            next,
        }
    }
}

impl<R: Rng> Iterator for MiningProcess<'_, R> {
    type Item = (f64, Population);

    fn next(&mut self) -> Option<(f64, Population)> {
        let i = match self.next {
            [None, None] => return None,
            [Some(_), None] => 0,
            [None, Some(_)] => 1,
            // Ties go to the honest side; they have probability zero.
            [Some(h), Some(a)] => usize::from(a < h),
        };
        let t = self.next[i].expect("chosen clock is running");
        self.next[i] = exp_wait(self.rng, self.rate[i]).map(|w| t + w);
        let pop = if i == 0 {
            Population::Honest
        } else {
            Population::Adversary
        };
        Some((t, pop))
    }
}

/// Fractional hash budget for pow-mode grinding.
#[derive(Clone, Copy, Debug, Default)]
pub struct HashBudget {
    carry: f64,
}

impl HashBudget {
    /// Whole hashes available after `seconds` at `hashrate`.
    pub fn take(&mut self, hashrate: f64, seconds: f64) -> u64 {
        self.carry += hashrate * seconds;
        let whole = self.carry.floor();
        self.carry -= whole;
        whole as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn zero_rho_never_yields_adversary() {
        let mut rng = stream(1, "t");
        let p = MiningProcess::new(&mut rng, 0.0, 1.0, 0.0, 0.0);
        assert!(p.take(1000).all(|(_, pop)| pop == Population::Honest));
    }

    #[test]
    fn finds_are_time_ordered_and_gated() {
        let mut rng = stream(2, "t");
        let p = MiningProcess::new(&mut rng, 0.5, 1.0, 5.0, 0.0);
        let finds: Vec<_> = p.take(500).collect();
        assert!(finds.windows(2).all(|w| w[0].0 <= w[1].0));
        assert!(finds.iter().all(|(t, pop)| *pop == Population::Adversary || *t >= 5.0));
    }

    #[test]
    fn budget_carries_fractions() {
        let mut b = HashBudget::default();
        let total: u64 = (0..10).map(|_| b.take(2.5, 0.1)).sum();
        assert_eq!(total, 2);
    }
}
