//! Scenario files: a versioned TOML schema and its validation.
//!
//! Times are given in seconds and converted to integer nanoseconds once, so
//! event ordering never depends on floating point.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use solida_core::{CryptoKind, Digest, Time};
use thiserror::Error;

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("invalid scenario: field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

impl ScenarioError {
    pub fn field(&self) -> Option<&str> {
        match self {
            ScenarioError::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }
}

fn invalid(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiningMode {
    /// Exponential clocks per population.
    #[default]
    Rate,
    /// Actual nonce grinding against a small-difficulty threshold.
    Pow,
}

impl FromStr for MiningMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rate" => Ok(MiningMode::Rate),
            "pow" => Ok(MiningMode::Pow),
            other => Err(format!("unknown mining mode `{other}` (expected rate or pow)")),
        }
    }
}

/// How the adversary picks delivery times for honest-to-honest messages.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerMode {
    /// Earliest possible: base latency plus serialization.
    #[default]
    Base,
    /// Every message takes exactly Δ (or longer if serialization says so).
    Max,
    /// Uniform in `[earliest, send + Δ]`.
    Random,
    /// One honest member hears everything early, everyone else at Δ.
    Lemma1Tight,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SizeModel {
    #[default]
    Zero,
    /// 32-byte keys and 64-byte signatures.
    Compact,
    /// 49-byte keys and 56-byte signatures (ECDSA over a 192-bit curve).
    Ecdsa192,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    #[serde(default)]
    pub base_latency: f64,
    #[serde(default)]
    pub scheduler: SchedulerMode,
    /// Egress bandwidth per node in bits per second; absent means unlimited.
    #[serde(default)]
    pub bandwidth_bps: Option<f64>,
    #[serde(default)]
    pub size_model: SizeModel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Honest,
    /// Sends nothing in the leader role.
    Silent,
    /// Stops processing and sending at a fixed time.
    Crash,
    /// Every outgoing message takes exactly Δ.
    MaxDelay,
    /// Sends conflicting proposals to two halves of the committee.
    Equivocating,
    /// Only ever proposes its own self-transfers.
    SelfDealing,
    /// Withholds notify and decision messages.
    NotifyHoarder,
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StrategyKind::Honest => "honest",
            StrategyKind::Silent => "silent",
            StrategyKind::Crash => "crash",
            StrategyKind::MaxDelay => "max_delay",
            StrategyKind::Equivocating => "equivocating",
            StrategyKind::SelfDealing => "self_dealing",
            StrategyKind::NotifyHoarder => "notify_hoarder",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ByzantineSpec {
    /// Index into the genesis committee.
    pub member: usize,
    pub strategy: StrategyKind,
    /// Crash time in seconds; crash strategies without one pick it randomly.
    #[serde(default)]
    pub crash_at: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinerStrategy {
    /// Never publishes a PoW.
    None,
    /// Publishes every PoW immediately.
    Publish,
    /// Publishes only when admission keeps the adversary at f seats or fewer.
    #[default]
    KeepF,
    /// Like keep_f, but holds each PoW for `hold` seconds first.
    PowWithholder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    #[serde(default)]
    pub miner: MinerStrategy,
    #[serde(default)]
    pub hold: f64,
    /// Behaviour of adversarial miners once admitted, used round-robin.
    #[serde(default = "default_member_strategies")]
    pub member_strategies: Vec<StrategyKind>,
    /// Track the adversary's view of the network (puzzle knowledge). Cost
    /// experiments turn this off.
    #[serde(default = "yes")]
    pub observer: bool,
}

impl Default for AdversarySpec {
    fn default() -> Self {
        Self {
            miner: MinerStrategy::default(),
            hold: 0.0,
            member_strategies: default_member_strategies(),
            observer: true,
        }
    }
}

fn default_member_strategies() -> Vec<StrategyKind> {
    vec![StrategyKind::Silent]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    #[serde(default)]
    pub clients: usize,
    /// Client transactions per second across all clients.
    #[serde(default)]
    pub tx_rate: f64,
    #[serde(default = "default_balance")]
    pub balance: u64,
}

impl Default for LoadSpec {
    fn default() -> Self {
        Self {
            clients: 0,
            tx_rate: 0.0,
            balance: default_balance(),
        }
    }
}

fn default_balance() -> u64 {
    1_000_000
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceLevel {
    Off,
    /// Transitions, commits, PoW finds and puzzle-learn times.
    #[default]
    Events,
    /// Also every send and delivery.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    pub n: usize,
    pub f: usize,
    /// Worst-case honest message delay, seconds.
    pub delta: f64,
    /// Expected network-wide PoW interval, seconds. Absent disables mining.
    #[serde(default)]
    pub d: Option<f64>,
    /// Adversary share of mining power.
    #[serde(default)]
    pub rho: f64,
    /// Stop once this many slots are committed...
    #[serde(default)]
    pub slots: u64,
    /// ...and this many reconfigurations have happened.
    #[serde(default)]
    pub reconfigurations: u64,
    /// Hard stop, seconds of virtual time.
    pub duration: f64,
    #[serde(default = "default_crypto")]
    pub crypto: CryptoKind,
    #[serde(default)]
    pub mining: MiningMode,
    /// Pow-mode difficulty in leading zero bits.
    #[serde(default = "default_difficulty")]
    pub difficulty_bits: u32,
    #[serde(default)]
    pub network: NetworkSpec,
    #[serde(default)]
    pub byzantine: Vec<ByzantineSpec>,
    #[serde(default)]
    pub adversary: AdversarySpec,
    #[serde(default)]
    pub load: LoadSpec,
    /// Times (seconds) at which an honest miner is handed a PoW, in addition
    /// to whatever the mining process produces.
    #[serde(default)]
    pub inject_pow: Vec<f64>,
    #[serde(default = "yes")]
    pub propose_empty: bool,
    /// Permit more than f Byzantine members (negative tests).
    #[serde(default)]
    pub allow_excess_byzantine: bool,
    /// Bandwidth-limited cost experiments may exceed Δ; the Δ-bound check is
    /// then reported but not enforced.
    #[serde(default)]
    pub model_delta_violating: bool,
    #[serde(default)]
    pub trace: TraceLevel,
}

fn default_version() -> u32 {
    SCENARIO_VERSION
}

fn default_crypto() -> CryptoKind {
    CryptoKind::Sim
}

fn default_difficulty() -> u32 {
    8
}

fn yes() -> bool {
    true
}

fn finite_nonneg(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

impl Scenario {
    /// A fault-free `n = 3f+1` scenario with no mining and instant links.
    pub fn basic(f: usize, delta: f64) -> Self {
        Self {
            version: SCENARIO_VERSION,
            name: String::new(),
            seed: 0,
            n: 3 * f + 1,
            f,
            delta,
            d: None,
            rho: 0.0,
            slots: 0,
            reconfigurations: 0,
            duration: 60.0,
            crypto: CryptoKind::Sim,
            mining: MiningMode::Rate,
            difficulty_bits: default_difficulty(),
            network: NetworkSpec::default(),
            byzantine: Vec::new(),
            adversary: AdversarySpec::default(),
            load: LoadSpec::default(),
            inject_pow: Vec::new(),
            propose_empty: true,
            allow_excess_byzantine: false,
            model_delta_violating: false,
            trace: TraceLevel::Events,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, ScenarioError> {
        let sc: Scenario = toml::from_str(s).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenarios always serialize")
    }

    /// Digest of the canonical JSON form.
    pub fn digest(&self) -> Digest {
        let json = serde_json::to_vec(self).expect("scenarios always serialize");
        solida_core::crypto::oracle_parts(b"solida/scenario", &[&json])
    }

    pub fn delta_time(&self) -> Time {
        Time::from_secs_f64(self.delta)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.version != SCENARIO_VERSION {
            return Err(invalid("version", format!("unsupported version {} (expected {SCENARIO_VERSION})", self.version)));
        }
        if self.f == 0 {
            return Err(invalid("f", "f must be at least 1"));
        }
        if self.n != 3 * self.f + 1 {
            return Err(invalid(
                "n",
                format!("n must equal 3f+1 = {} for f = {}, got {}", 3 * self.f + 1, self.f, self.n),
            ));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(invalid("delta", "must be a positive number of seconds"));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(invalid("duration", "must be a positive number of seconds"));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(invalid("rho", "must lie in [0, 1)"));
        }
        if let Some(d) = self.d {
            if !(d.is_finite() && d > 0.0) {
                return Err(invalid("d", "must be a positive number of seconds"));
            }
        }
        let net = &self.network;
        if !finite_nonneg(net.base_latency) || net.base_latency > self.delta {
            return Err(invalid("network.base_latency", "must lie in [0, delta]"));
        }
        if let Some(b) = net.bandwidth_bps {
            if !(b.is_finite() && b > 0.0) {
                return Err(invalid("network.bandwidth_bps", "must be positive"));
            }
            if net.size_model != SizeModel::Zero && !self.model_delta_violating {
                return Err(invalid(
                    "network.bandwidth_bps",
                    "egress queueing can exceed delta; set model_delta_violating = true for cost experiments",
                ));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for (i, b) in self.byzantine.iter().enumerate() {
            if b.member >= self.n {
                return Err(invalid(&format!("byzantine[{i}].member"), format!("index {} is outside the committee", b.member)));
            }
            if !seen.insert(b.member) {
                return Err(invalid(&format!("byzantine[{i}].member"), format!("member {} listed twice", b.member)));
            }
            if b.crash_at.is_some_and(|t| !finite_nonneg(t)) {
                return Err(invalid(&format!("byzantine[{i}].crash_at"), "must be a non-negative time"));
            }
        }
        if self.byzantine.len() > self.f && !self.allow_excess_byzantine {
            return Err(invalid(
                "byzantine",
                format!("{} Byzantine members exceed f = {}; set allow_excess_byzantine to run anyway", self.byzantine.len(), self.f),
            ));
        }
        if !finite_nonneg(self.adversary.hold) {
            return Err(invalid("adversary.hold", "must be a non-negative time"));
        }
        if self.adversary.member_strategies.is_empty() {
            return Err(invalid("adversary.member_strategies", "must not be empty"));
        }
        if !finite_nonneg(self.load.tx_rate) {
            return Err(invalid("load.tx_rate", "must be non-negative"));
        }
        if self.load.tx_rate > 0.0 && self.load.clients < 2 {
            return Err(invalid("load.clients", "client load needs at least two clients"));
        }
        if let Some(i) = self.inject_pow.iter().position(|t| !finite_nonneg(*t)) {
            return Err(invalid(&format!("inject_pow[{i}]"), "must be a non-negative time"));
        }
        if self.mining == MiningMode::Pow {
            if self.d.is_none() {
                return Err(invalid("d", "pow mining needs an expected PoW interval"));
            }
            if !(1..=24).contains(&self.difficulty_bits) {
                return Err(invalid("difficulty_bits", "must lie in 1..=24"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "seed = 1\nn = 4\nf = 1\ndelta = 0.01\nduration = 1.0\n";

    #[test]
    fn minimal_file_gets_defaults() {
        let sc = Scenario::from_toml_str(MINIMAL).unwrap();
        assert_eq!(sc.version, SCENARIO_VERSION);
        assert_eq!(sc.crypto, CryptoKind::Sim);
        assert_eq!(sc.network.scheduler, SchedulerMode::Base);
        assert!(sc.propose_empty && sc.adversary.observer);
        assert_eq!(Scenario::from_toml_str(&sc.to_toml_string()).unwrap(), sc);
    }

    #[test]
    fn wrong_committee_size_names_the_field() {
        let err = Scenario::from_toml_str(&MINIMAL.replace("n = 4", "n = 5")).unwrap_err();
        assert_eq!(err.field(), Some("n"));
        assert!(err.to_string().contains("3f+1"));
    }

    #[test]
    fn parse_errors_carry_a_location() {
        let err = Scenario::from_toml_str("seed = 1\nn = \"four\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        let err = Scenario::from_toml_str(&format!("{MINIMAL}colour = 3\n")).unwrap_err();
        assert!(err.to_string().contains("colour"));
    }

    #[test]
    fn validation_catches_bad_fields() {
        // (top-level replacement, appended tables, field)
        let cases = [
            (("delta = 0.01", "delta = 0.0"), "", "delta"),
            (("duration = 1.0", "duration = -1.0"), "", "duration"),
            (("seed = 1", "seed = 1\nrho = 1.0"), "", "rho"),
            (("", ""), "[network]\nbase_latency = 0.5\n", "network.base_latency"),
            (
                ("", ""),
                "[network]\nbandwidth_bps = 1e6\nsize_model = \"ecdsa192\"\n",
                "network.bandwidth_bps",
            ),
            (("seed = 1", "seed = 1\nmining = \"pow\""), "", "d"),
        ];
        for ((from, to), tables, field) in cases {
            let top = if from.is_empty() { MINIMAL.to_string() } else { MINIMAL.replace(from, to) };
            let err = Scenario::from_toml_str(&format!("{top}{tables}")).unwrap_err();
            assert_eq!(err.field(), Some(field), "{err}");
        }
    }

    #[test]
    fn byzantine_bounds() {
        let two = format!(
            "{MINIMAL}[[byzantine]]\nmember = 0\nstrategy = \"silent\"\n[[byzantine]]\nmember = 1\nstrategy = \"crash\"\n"
        );
        let err = Scenario::from_toml_str(&two).unwrap_err();
        assert_eq!(err.field(), Some("byzantine"));
        let allowed = two.replace("seed = 1", "seed = 1\nallow_excess_byzantine = true");
        assert_eq!(Scenario::from_toml_str(&allowed).unwrap().byzantine.len(), 2);
        let out = format!("{MINIMAL}[[byzantine]]\nmember = 4\nstrategy = \"silent\"\n");
        assert_eq!(Scenario::from_toml_str(&out).unwrap_err().field(), Some("byzantine[0].member"));
    }
}
