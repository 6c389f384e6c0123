//! Reconfiguration races against the packaged optimal adversary.
//!
//! The adversary learns each puzzle first and honest miners learn it 2Δ
//! later, the worst case the puzzle construction allows. The adversary wins
//! if it finds a PoW during that head start, if the first PoW after it is
//! adversarial, or if any PoW at all lands in the 8Δ an honest external
//! leader needs to finish (counted against the honest side even when the
//! interrupting PoW is honest).

use rand::Rng;
use serde::Serialize;

use crate::mining::{MiningProcess, Population};
use crate::rng::stream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RaceParams {
    pub rho: f64,
    /// Δ in seconds.
    pub delta: f64,
    /// Expected PoW interval in seconds.
    pub d: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RaceOutcome {
    /// No adversarial PoW during the head start.
    pub x: bool,
    /// The first PoW after the head start is honest.
    pub y: bool,
    /// Nothing interrupts the honest leader's window.
    pub z: bool,
    pub winner: Population,
}

pub fn race<R: Rng>(rng: &mut R, p: &RaceParams) -> RaceOutcome {
    let head = 2.0 * p.delta;
    let window = 8.0 * p.delta;
    let finds = MiningProcess::new(rng, p.rho, p.d, head, 0.0);
    let mut x = true;
    let mut y = None;
    let mut honest_at = None;
    let mut z = false;
    // Clocks are memoryless, so each event is sampled unconditionally: Y from
    // the first find after the head start, Z from the find following the
    // first honest one.
    for (t, pop) in finds {
        if t < head {
            x = false;
            continue;
        }
        y.get_or_insert(pop == Population::Honest);
        match honest_at {
            None if pop == Population::Honest => honest_at = Some(t),
            None => {}
            Some(h) => {
                z = t > h + window;
                break;
            }
        }
    }
    let y = y.unwrap_or(false);
    let winner = if x && y && z {
        Population::Honest
    } else {
        Population::Adversary
    };
    RaceOutcome { x, y, z, winner }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct RaceStats {
    pub races: u64,
    pub adversary_wins: u64,
    pub x: u64,
    pub y: u64,
    pub z: u64,
}

impl RaceStats {
    pub fn adversary_fraction(&self) -> f64 {
        self.adversary_wins as f64 / self.races as f64
    }

    pub fn fraction(&self, count: u64) -> f64 {
        count as f64 / self.races as f64
    }

    /// Binomial standard error for a fraction `p` over these races.
    pub fn sigma(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.races as f64).sqrt()
    }
}

pub fn run_races(seed: u64, p: &RaceParams, races: u64) -> RaceStats {
    let mut rng = stream(seed, "races");
    let mut s = RaceStats::default();
    for _ in 0..races {
        let o = race(&mut rng, p);
        s.races += 1;
        s.adversary_wins += u64::from(o.winner == Population::Adversary);
        s.x += u64::from(o.x);
        s.y += u64::from(o.y);
        s.z += u64::from(o.z);
    }
    s
}

/// Fraction of first finds that are adversarial when both sides learn the
/// puzzle at the same time.
pub fn first_finder_fraction(seed: u64, rho: f64, d: f64, races: u64) -> f64 {
    let mut rng = stream(seed, "first-finder");
    let mut adv = 0u64;
    for _ in 0..races {
        let mut p = MiningProcess::new(&mut rng, rho, d, 0.0, 0.0);
        if let Some((_, Population::Adversary)) = p.next() {
            adv += 1;
        }
    }
    adv as f64 / races as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rho_zero_delay_is_always_honest() {
        let p = RaceParams {
            rho: 0.0,
            delta: 0.0,
            d: 1.0,
        };
        let s = run_races(3, &p, 1000);
        // With Δ = 0 the window is empty; only exact ties could interrupt.
        assert_eq!(s.adversary_wins, 0);
        assert_eq!((s.x, s.y, s.z), (1000, 1000, 1000));
    }

    #[test]
    fn deterministic_per_seed() {
        let p = RaceParams {
            rho: 0.2,
            delta: 1.0 / 120.0,
            d: 1.0,
        };
        assert_eq!(run_races(9, &p, 5000), run_races(9, &p, 5000));
    }
}
