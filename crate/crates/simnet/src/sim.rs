//! The discrete-event loop.
//!
//! Events are ordered by `(time, class, seq)`: deliveries before timers
//! before everything else at the same instant, then insertion order. All
//! randomness comes from named streams of the scenario seed, so a run is a
//! pure function of its scenario.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, HashSet};
use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use solida_core::crypto::mine;
use solida_core::ledger::LedgerExport;
use solida_core::{
    Action, CryptoProvider, Genesis, Header, Input, Keypair, Ledger, Message, Note, PowSolution, ProtocolError,
    PublicKey, Replica, ReplicaConfig, SignedHeader, SlotValue, Threshold, Time, TimerId, Transaction, ViewTuple,
};
use thiserror::Error;

use crate::checks;
use crate::mining::{exp_wait, rates, HashBudget, Population};
use crate::network::{message_size, Egress};
use crate::report::{histogram, PowCounts, RaceRecord, RunReport};
use crate::rng::{key_seed, stream};
use crate::scenario::{MinerStrategy, MiningMode, Scenario, ScenarioError, SchedulerMode, StrategyKind};
use crate::strategy::{self, Forgery, Outgoing};
use crate::trace::{Record, Trace};

/// Genesis accounts for adversary miner keys.
const FUNDED_MINER_KEYS: usize = 32;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Forgery(#[from] Forgery),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Member,
    Observer,
    AdversaryObserver,
    HonestMiner,
    AdversaryMiner,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Member => "member",
            Role::Observer => "observer",
            Role::AdversaryObserver => "adversary_observer",
            Role::HonestMiner => "honest_miner",
            Role::AdversaryMiner => "adversary_miner",
        }
    }
}

pub struct Node {
    pub label: String,
    pub role: Role,
    /// Controlled by the adversary, whatever its strategy.
    pub adversarial: bool,
    pub strategy: StrategyKind,
    pub replica: Replica,
    pub crashed: bool,
    pub spawned_at: Time,
    egress: Egress,
    next_seq: u64,
}

impl Node {
    pub fn public_key(&self) -> PublicKey {
        self.replica.public_key()
    }

    pub fn honest(&self) -> bool {
        !self.adversarial
    }
}

#[derive(Clone, Debug)]
pub struct CommitRec {
    pub node: usize,
    pub slot: u64,
    pub digest: solida_core::Digest,
    pub view: ViewTuple,
    pub time: Time,
}

#[derive(Clone, Debug)]
pub struct PowRec {
    pub time: Time,
    pub pop: Population,
    pub config: u64,
    pub published: bool,
    pub node: Option<usize>,
}

/// Everything the checks look at after the run.
#[derive(Debug, Default)]
pub struct Observations {
    /// Commits by honest nodes.
    pub commits: Vec<CommitRec>,
    /// First honest commit per slot.
    pub first_commit: BTreeMap<u64, Time>,
    /// Prepare signers per `(slot, view, digest)`, over everything sent.
    pub prepares: HashMap<(u64, ViewTuple, solida_core::Digest), HashSet<PublicKey>>,
    /// `(slot, view)` pairs for which some digest gathered a quorum.
    pub accepted: BTreeMap<(u64, ViewTuple), BTreeSet<solida_core::Digest>>,
    /// View changes started by honest members.
    pub view_changes: Vec<(usize, Time, ViewTuple)>,
    /// First time each population's observer learned `puzzle(c)`.
    pub learned: BTreeMap<(u64, Population), Time>,
    pub pows: Vec<PowRec>,
    pub honest_deliveries: u64,
    pub delta_violations: u64,
    pub worst_delay: Time,
    /// First notify per `(miner node, slot)`: arrival time and causal depth.
    pub first_notify: HashMap<(usize, u64), (Time, u32)>,
}

#[derive(Debug)]
enum Event {
    Deliver {
        to: usize,
        from: usize,
        msg: Arc<Message>,
        sent: Time,
        depth: u32,
    },
    Timer {
        node: usize,
        id: TimerId,
        depth: u32,
    },
    Mine {
        pop: Population,
        epoch: u64,
    },
    MineTick,
    Release {
        key: usize,
        sol: PowSolution,
        config: u64,
    },
    Inject,
    Load,
    Crash {
        node: usize,
    },
}

impl Event {
    fn class(&self) -> u8 {
        match self {
            Event::Deliver { .. } => 0,
            Event::Timer { .. } => 1,
            _ => 2,
        }
    }
}

#[derive(Debug)]
struct Entry {
    at: Time,
    class: u8,
    seq: u64,
    ev: Event,
}

impl PartialEq for Entry {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Entry {
    fn cmp(&self, o: &Self) -> Ordering {
        (o.at, o.class, o.seq).cmp(&(self.at, self.class, self.seq))
    }
}

struct PopState {
    rng: ChaCha8Rng,
    rate: f64,
    hashrate: f64,
    epoch: u64,
    config: Option<u64>,
    keys_used: usize,
    cursor: u64,
    budget: HashBudget,
}

pub struct RunOutput {
    pub report: RunReport,
    pub trace: Trace,
    pub export: LedgerExport,
}

pub struct Sim {
    sc: Scenario,
    crypto: Arc<dyn CryptoProvider>,
    genesis: Genesis,
    delta: Time,
    base: Time,
    end: Time,
    now: Time,
    heap: BinaryHeap<Entry>,
    seq: u64,
    deliveries_pending: usize,
    nodes: Vec<Node>,
    by_key: HashMap<PublicKey, usize>,
    honest_obs: usize,
    adv_obs: Option<usize>,
    favoured: Option<usize>,
    net_rng: ChaCha8Rng,
    adv_rng: ChaCha8Rng,
    load_rng: ChaCha8Rng,
    mining: [PopState; 2],
    strategy_cursor: usize,
    clients: Vec<Keypair>,
    client_seq: Vec<u64>,
    cancelled: HashSet<(usize, TimerId)>,
    synthesized: HashSet<u64>,
    depth: u32,
    trace: Trace,
    data: Observations,
    started: bool,
    stop_reason: Option<&'static str>,
    /// Events processed since the clock last moved.
    same_instant: u64,
}

/// A run that processes this many events without the clock moving is
/// stopped as stalled (zero latency with back-to-back empty slots).
pub const STALL_EVENTS: u64 = 5_000_000;

fn pop_index(p: Population) -> usize {
    match p {
        Population::Honest => 0,
        Population::Adversary => 1,
    }
}

impl Sim {
    pub fn new(sc: Scenario) -> Result<Self, SimError> {
        sc.validate()?;
        let crypto = sc.crypto.provider();
        let delta = sc.delta_time();
        let mut cfg = ReplicaConfig::new(delta);
        cfg.propose_empty = sc.propose_empty;

        let key = |role: &str, i: usize| crypto.keypair_from_seed(&key_seed(sc.seed, role, i));
        let member_keys: Vec<Keypair> = (0..sc.n).map(|i| key("member", i)).collect();
        let clients: Vec<Keypair> = (0..sc.load.clients).map(|i| key("client", i)).collect();
        let threshold = match sc.mining {
            MiningMode::Rate => Threshold::MAX,
            MiningMode::Pow => Threshold::from_leading_zero_bits(sc.difficulty_bits),
        };
        let mut balances: Vec<(PublicKey, u64)> = member_keys
            .iter()
            .chain(&clients)
            .map(|k| (k.public(), sc.load.balance))
            .collect();
        balances.extend((0..FUNDED_MINER_KEYS).map(|i| (key("adversary-miner", i).public(), sc.load.balance)));
        let genesis = Genesis {
            committee: member_keys.iter().map(|k| k.public()).collect(),
            balances,
            threshold,
        };

        let byz: HashMap<usize, StrategyKind> = sc.byzantine.iter().map(|b| (b.member, b.strategy)).collect();
        let mut nodes = Vec::new();
        let mut push = |label: String, role: Role, adversarial: bool, strategy, k: Keypair| -> Result<(), SimError> {
            let replica = Replica::new(cfg.clone(), crypto.clone(), k, genesis.clone())?;
            nodes.push(Node {
                label,
                role,
                adversarial,
                strategy,
                replica,
                crashed: false,
                spawned_at: Time::ZERO,
                egress: Egress::default(),
                next_seq: 0,
            });
            Ok(())
        };
        for (i, k) in member_keys.into_iter().enumerate() {
            let s = byz.get(&i).copied();
            push(format!("m{i}"), Role::Member, s.is_some(), s.unwrap_or(StrategyKind::Honest), k)?;
        }
        let honest_obs = sc.n;
        push("observer".into(), Role::Observer, false, StrategyKind::Honest, key("observer", 0))?;
        let adv_obs = if sc.adversary.observer {
            push(
                "adversary".into(),
                Role::AdversaryObserver,
                true,
                StrategyKind::Honest,
                key("adversary-observer", 0),
            )?;
            Some(honest_obs + 1)
        } else {
            None
        };
        let favoured = (sc.network.scheduler == SchedulerMode::Lemma1Tight)
            .then(|| (0..sc.n).find(|i| !byz.contains_key(i)))
            .flatten();
        let by_key = nodes.iter().enumerate().map(|(i, n)| (n.public_key(), i)).collect();

        let (hr, ar) = sc.d.map_or((0.0, 0.0), |d| rates(sc.rho, d));
        let p = threshold.probability();
        let pop_state = |name: &str, rate: f64| PopState {
            rng: stream(sc.seed, name),
            rate,
            hashrate: rate / p,
            epoch: 0,
            config: None,
            keys_used: 0,
            cursor: 0,
            budget: HashBudget::default(),
        };
        let mining = [pop_state("mining/honest", hr), pop_state("mining/adversary", ar)];

        Ok(Self {
            crypto,
            genesis,
            delta,
            base: Time::from_secs_f64(sc.network.base_latency),
            end: Time::from_secs_f64(sc.duration),
            now: Time::ZERO,
            heap: BinaryHeap::new(),
            seq: 0,
            deliveries_pending: 0,
            nodes,
            by_key,
            honest_obs,
            adv_obs,
            favoured,
            net_rng: stream(sc.seed, "network"),
            adv_rng: stream(sc.seed, "adversary"),
            load_rng: stream(sc.seed, "load"),
            mining,
            strategy_cursor: 0,
            client_seq: vec![0; clients.len()],
            clients,
            cancelled: HashSet::new(),
            synthesized: HashSet::new(),
            depth: 0,
            trace: Trace::new(sc.trace),
            data: Observations::default(),
            started: false,
            stop_reason: None,
            same_instant: 0,
            sc,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.sc
    }

    pub fn now(&self) -> Time {
        self.now
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn observations(&self) -> &Observations {
        &self.data
    }

    pub fn genesis(&self) -> &Genesis {
        &self.genesis
    }

    pub fn node_by_key(&self, pk: &PublicKey) -> Option<usize> {
        self.by_key.get(pk).copied()
    }

    /// The honest observer's ledger: every honest decision reaches it.
    pub fn observer_ledger(&self) -> &Ledger {
        self.nodes[self.honest_obs].replica.ledger()
    }

    /// The longest ledger held by an honest node.
    pub fn reference_ledger(&self) -> &Ledger {
        self.nodes
            .iter()
            .filter(|n| n.honest())
            .map(|n| n.replica.ledger())
            .max_by_key(|l| l.len())
            .expect("the observer is honest")
    }

    /// No messages in flight.
    pub fn quiescent(&self) -> bool {
        self.deliveries_pending == 0
    }

    pub fn first_notify(&self, node: usize, slot: u64) -> Option<(Time, u32)> {
        self.data.first_notify.get(&(node, slot)).copied()
    }

    fn push(&mut self, at: Time, ev: Event) {
        if matches!(ev, Event::Deliver { .. }) {
            self.deliveries_pending += 1;
        }
        self.seq += 1;
        self.heap.push(Entry {
            at,
            class: ev.class(),
            seq: self.seq,
            ev,
        });
    }

    pub fn start(&mut self) {
        if self.started {
            return;
        }
        self.started = true;
        for i in 0..self.nodes.len() {
            let n = &self.nodes[i];
            let detail = format!("{} {} {}", n.label, n.role.as_str(), n.public_key());
            self.trace.push(Record::new(Time::ZERO, i, "node").detail(detail));
        }
        for spec in self.sc.byzantine.clone() {
            if spec.strategy == StrategyKind::Crash {
                let at = match spec.crash_at {
                    Some(t) => Time::from_secs_f64(t),
                    None => self.random_crash_delay(),
                };
                self.push(at, Event::Crash { node: spec.member });
            }
        }
        for t in self.sc.inject_pow.clone() {
            self.push(Time::from_secs_f64(t), Event::Inject);
        }
        if let Some(iv) = self.load_interval() {
            self.push(iv, Event::Load);
        }
        if self.sc.mining == MiningMode::Pow && self.sc.d.is_some() {
            let tick = self.tick();
            self.push(tick, Event::MineTick);
        }
        for i in 0..self.nodes.len() {
            self.apply(i, Input::Start, 0);
        }
    }

    fn tick(&self) -> Time {
        Time(self.delta.0 / 2).max(Time(1))
    }

    fn random_crash_delay(&mut self) -> Time {
        let k = self.adv_rng.gen_range(10..60);
        self.delta * k
    }

    fn load_interval(&self) -> Option<Time> {
        let self_dealing = self.sc.byzantine.iter().any(|b| b.strategy == StrategyKind::SelfDealing)
            || (self.sc.rho > 0.0 && self.sc.adversary.member_strategies.contains(&StrategyKind::SelfDealing));
        if self.sc.load.tx_rate > 0.0 && !self.clients.is_empty() {
            Some(Time::from_secs_f64(1.0 / self.sc.load.tx_rate))
        } else if self_dealing {
            Some(self.delta * 3)
        } else {
            None
        }
    }

    /// Whether the run reached its slot and reconfiguration targets.
    pub fn targets_met(&self) -> bool {
        if self.sc.slots == 0 && self.sc.reconfigurations == 0 {
            return false;
        }
        let l = self.observer_ledger();
        l.len() >= self.sc.slots && l.config() > self.sc.reconfigurations
    }

    /// Process one event. Returns `false` once the run is over.
    pub fn step(&mut self) -> Result<bool, SimError> {
        self.start();
        if self.stop_reason.is_some() {
            return Ok(false);
        }
        if self.targets_met() {
            self.stop_reason = Some("targets");
            return Ok(false);
        }
        let Some(e) = self.heap.pop() else {
            self.stop_reason = Some("quiescent");
            return Ok(false);
        };
        if e.at > self.end {
            self.heap.push(e);
            self.now = self.end;
            self.stop_reason = Some("duration");
            return Ok(false);
        }
        if e.at == self.now {
            self.same_instant += 1;
            if self.same_instant > STALL_EVENTS {
                self.heap.push(e);
                self.stop_reason = Some("stalled");
                return Ok(false);
            }
        } else {
            self.same_instant = 0;
        }
        self.now = e.at;
        self.dispatch(e.ev)?;
        Ok(true)
    }

    /// Step until `stop` holds or the run ends; returns whether `stop` held.
    pub fn run_until(&mut self, mut stop: impl FnMut(&Sim) -> bool) -> Result<bool, SimError> {
        self.start();
        loop {
            if stop(self) {
                return Ok(true);
            }
            if !self.step()? {
                return Ok(stop(self));
            }
        }
    }

    pub fn run(mut self) -> Result<RunOutput, SimError> {
        while self.step()? {}
        Ok(self.finish())
    }

    fn dispatch(&mut self, ev: Event) -> Result<(), SimError> {
        match ev {
            Event::Deliver {
                to,
                from,
                msg,
                sent,
                depth,
            } => {
                self.deliveries_pending -= 1;
                if self.nodes[to].crashed {
                    return Ok(());
                }
                if let Message::Notify { header, .. } = msg.as_ref() {
                    if matches!(self.nodes[to].role, Role::HonestMiner | Role::AdversaryMiner) {
                        if let Header::Notify { slot, .. } = header.header {
                            self.data.first_notify.entry((to, slot)).or_insert((self.now, depth));
                        }
                    }
                }
                if self.trace.full() {
                    let mut r = Record::new(self.now, to, "deliver").detail(format!(
                        "{} from {} sent {}",
                        msg.name(),
                        self.nodes[from].label,
                        sent
                    ));
                    if let Some(s) = msg.slot() {
                        r = r.slot(s);
                    }
                    self.trace.push(r);
                }
                let from_pk = self.nodes[from].public_key();
                self.apply_checked(to, Input::Message { from: from_pk, msg }, depth)
            }
            Event::Timer { node, id, depth } => {
                if self.cancelled.remove(&(node, id)) {
                    return Ok(());
                }
                self.apply_checked(node, Input::Timer(id), depth)
            }
            Event::Mine { pop, epoch } => self.on_mine(pop, epoch),
            Event::MineTick => self.on_mine_tick(),
            Event::Release { key, sol, config } => {
                let obs = self.observer_for(Population::Adversary);
                let current = self.nodes[obs].replica.ledger().config() == config;
                if current && self.keep_f_ok() {
                    self.publish(Population::Adversary, key, sol, config)
                } else {
                    self.trace
                        .push(Record::new(self.now, obs, "pow_discarded").detail(format!("config {config}")));
                    self.data.pows.push(PowRec {
                        time: self.now,
                        pop: Population::Adversary,
                        config,
                        published: false,
                        node: None,
                    });
                    Ok(())
                }
            }
            Event::Inject => self.inject(),
            Event::Load => {
                self.on_load()?;
                if let Some(iv) = self.load_interval() {
                    self.push(self.now + iv, Event::Load);
                }
                Ok(())
            }
            Event::Crash { node } => {
                if !self.nodes[node].crashed {
                    self.nodes[node].crashed = true;
                    self.trace.push(Record::new(self.now, node, "crash"));
                }
                Ok(())
            }
        }
    }

    fn apply_checked(&mut self, i: usize, input: Input, depth: u32) -> Result<(), SimError> {
        if self.nodes[i].crashed {
            return Ok(());
        }
        let actions = self.nodes[i].replica.handle(input, self.now);
        self.depth = depth;
        self.process(i, actions)
    }

    fn apply(&mut self, i: usize, input: Input, depth: u32) {
        // Only strategy output can fail, and strategies never forge.
        self.apply_checked(i, input, depth).expect("strategy forged a message");
    }

    fn process(&mut self, i: usize, actions: Vec<Action>) -> Result<(), SimError> {
        let mut out = Vec::new();
        for a in actions {
            match a {
                Action::Send { to, msg } => out.push(Outgoing::Send {
                    to,
                    msg,
                    max_delay: false,
                }),
                Action::Propagate { msg } => out.push(Outgoing::Propagate { msg, max_delay: false }),
                Action::StartTimer { id, after, .. } => {
                    let depth = self.depth;
                    self.push(self.now + after, Event::Timer { node: i, id, depth });
                }
                Action::CancelTimer { id } => {
                    self.cancelled.insert((i, id));
                }
                Action::CommitSlot {
                    slot,
                    digest,
                    view,
                    value,
                    ..
                } => self.on_commit(i, slot, digest, view, &value),
                Action::EnterView { view } => {
                    self.trace.push(Record::new(self.now, i, "enter_view").view(view));
                }
                Action::Note(n) => self.on_note(i, n),
            }
        }
        let role = self.nodes[i].role;
        if role == Role::AdversaryObserver {
            return Ok(());
        }
        for o in &out {
            self.observe_outgoing(i, o.msg());
        }
        let node = &self.nodes[i];
        let out = if node.adversarial && node.replica.is_member() {
            let mut rewritten = Vec::new();
            for o in out {
                rewritten.extend(strategy::apply(
                    node.strategy,
                    o,
                    node.replica.keypair(),
                    node.replica.ledger(),
                    self.crypto.as_ref(),
                )?);
            }
            rewritten
        } else {
            out
        };
        for o in out {
            match o {
                Outgoing::Send { to, msg, max_delay } => {
                    let targets: Vec<usize> = to.iter().filter_map(|pk| self.by_key.get(pk).copied()).collect();
                    self.transmit(i, &targets, &msg, max_delay);
                }
                Outgoing::Propagate { msg, max_delay } => {
                    let committee = self.nodes[i].replica.ledger().committee();
                    let targets: Vec<usize> = (0..self.nodes.len())
                        .filter(|&j| {
                            j != i
                                && Some(j) != self.adv_obs
                                && !self.nodes[j].crashed
                                && !committee.contains(&self.nodes[j].public_key())
                        })
                        .collect();
                    self.transmit(i, &targets, &msg, max_delay);
                }
            }
        }
        Ok(())
    }

    /// Bookkeeping on what a replica wants to send, before any strategy.
    fn observe_outgoing(&mut self, from: usize, msg: &Arc<Message>) {
        match msg.as_ref() {
            Message::Prepare(h) => {
                if let Header::Prepare { view, slot, digest } = h.header {
                    let q = self.nodes[from].replica.ledger().committee().quorum();
                    let signers = self.data.prepares.entry((slot, view, digest)).or_default();
                    if signers.insert(h.signer) && signers.len() == q {
                        self.data.accepted.entry((slot, view)).or_default().insert(digest);
                    }
                }
            }
            Message::Notify { header, cert } => {
                let Some(a) = self.adv_obs else { return };
                self.push(
                    self.now,
                    Event::Deliver {
                        to: a,
                        from,
                        msg: msg.clone(),
                        sent: self.now,
                        depth: self.depth + 1,
                    },
                );
                let Header::Notify { view, slot, digest } = header.header else {
                    return;
                };
                if self.nodes[from].adversarial || !self.synthesized.insert(slot) {
                    return;
                }
                // The adversary signs notifies for its own deciding-committee
                // members the moment a decision exists.
                let committee = self.nodes[from].replica.ledger().committee_for_slot(slot).clone();
                for pk in committee.keys() {
                    let Some(&k) = self.by_key.get(pk) else { continue };
                    if !self.nodes[k].adversarial || k == from {
                        continue;
                    }
                    let h = SignedHeader::sign(
                        Header::Notify { view, slot, digest },
                        self.nodes[k].replica.keypair(),
                        self.crypto.as_ref(),
                    );
                    let m = Arc::new(Message::Notify {
                        header: h,
                        cert: cert.clone(),
                    });
                    self.push(
                        self.now,
                        Event::Deliver {
                            to: a,
                            from: k,
                            msg: m,
                            sent: self.now,
                            depth: self.depth + 1,
                        },
                    );
                }
            }
            Message::Decision { .. } => {
                if let Some(a) = self.adv_obs {
                    self.push(
                        self.now,
                        Event::Deliver {
                            to: a,
                            from,
                            msg: msg.clone(),
                            sent: self.now,
                            depth: self.depth + 1,
                        },
                    );
                }
            }
            _ => {}
        }
    }

    fn delivery_time(&mut self, to: usize, ready: Time, max_delay: bool) -> Time {
        let deadline = self.now + self.delta;
        if self.nodes[to].adversarial {
            return ready;
        }
        if max_delay {
            return ready.max(deadline);
        }
        match self.sc.network.scheduler {
            SchedulerMode::Base => ready,
            SchedulerMode::Max => ready.max(deadline),
            SchedulerMode::Random => {
                if ready >= deadline {
                    ready
                } else {
                    Time(self.net_rng.gen_range(ready.0..=deadline.0))
                }
            }
            SchedulerMode::Lemma1Tight => {
                if Some(to) == self.favoured {
                    ready
                } else {
                    ready.max(deadline)
                }
            }
        }
    }

    fn transmit(&mut self, from: usize, targets: &[usize], msg: &Arc<Message>, max_delay: bool) {
        let size = message_size(msg, self.sc.network.size_model);
        let bw = self.sc.network.bandwidth_bps;
        for &j in targets {
            if j == from {
                continue;
            }
            let ready = self.nodes[from].egress.enqueue(self.now, size, bw) + self.base;
            let at = self.delivery_time(j, ready, max_delay);
            if self.nodes[from].honest() && self.nodes[j].honest() {
                let delay = at.saturating_sub(self.now);
                self.data.honest_deliveries += 1;
                if delay > self.delta {
                    self.data.delta_violations += 1;
                }
                self.data.worst_delay = self.data.worst_delay.max(delay);
            }
            if self.trace.full() {
                let mut r = Record::new(self.now, from, "send").detail(format!("{} to {}", msg.name(), self.nodes[j].label));
                if let Some(s) = msg.slot() {
                    r = r.slot(s);
                }
                self.trace.push(r);
            }
            self.push(
                at,
                Event::Deliver {
                    to: j,
                    from,
                    msg: msg.clone(),
                    sent: self.now,
                    depth: self.depth + 1,
                },
            );
        }
    }

    fn on_commit(&mut self, i: usize, slot: u64, digest: solida_core::Digest, view: ViewTuple, value: &SlotValue) {
        if !self.nodes[i].honest() {
            return;
        }
        self.data.commits.push(CommitRec {
            node: i,
            slot,
            digest,
            view,
            time: self.now,
        });
        self.data.first_commit.entry(slot).or_insert(self.now);
        let mut r = Record::new(self.now, i, "commit").view(view).slot(slot).digest(digest);
        if let SlotValue::Reconfig(ev) = value {
            let who = self.by_key.get(&ev.new_member).map_or("?".into(), |&k| self.nodes[k].label.clone());
            r = r.detail(format!("reconfig admits {who}"));
        }
        self.trace.push(r);
    }

    fn on_note(&mut self, i: usize, n: Note) {
        let (event, view, detail): (&'static str, Option<ViewTuple>, String) = match &n {
            Note::PuzzleLearned { config } => {
                let pop = if i == self.honest_obs {
                    Some(Population::Honest)
                } else if Some(i) == self.adv_obs {
                    Some(Population::Adversary)
                } else {
                    None
                };
                if let Some(pop) = pop {
                    self.data.learned.entry((*config, pop)).or_insert(self.now);
                    self.start_mining(pop, *config);
                }
                ("puzzle_learned", None, format!("config {config}"))
            }
            Note::ViewChangeSent { view } => {
                if self.nodes[i].honest() {
                    self.data.view_changes.push((i, self.now, *view));
                }
                ("view_change", Some(*view), String::new())
            }
            Note::Equivocation { view, slot, signer } => {
                ("equivocation", Some(*view), format!("slot {slot} by {}", signer.short()))
            }
            Note::ExternalCase { view, case, s_star } => ("external_case", Some(*view), format!("{case:?} s*={s_star}")),
            Note::Terminated { view, reason } => ("terminated", Some(*view), reason.to_string()),
            Note::JoinedCommittee { config } => ("joined", None, format!("config {config}")),
            Note::LeftCommittee { config } => ("left", None, format!("config {config}")),
            Note::Rejected { kind, reason } => ("rejected", None, format!("{kind}: {reason}")),
        };
        let mut r = Record::new(self.now, i, event);
        if let Some(v) = view {
            r = r.view(v);
        }
        if !detail.is_empty() {
            r = r.detail(detail);
        }
        self.trace.push(r);
    }

    fn observer_for(&self, pop: Population) -> usize {
        match pop {
            Population::Honest => self.honest_obs,
            Population::Adversary => self.adv_obs.unwrap_or(self.honest_obs),
        }
    }

    fn start_mining(&mut self, pop: Population, config: u64) {
        let st = &mut self.mining[pop_index(pop)];
        st.epoch += 1;
        st.config = Some(config);
        st.cursor = 0;
        if self.sc.mining == MiningMode::Rate {
            let epoch = st.epoch;
            if let Some(w) = exp_wait(&mut st.rng, st.rate) {
                let at = self.now + Time::from_secs_f64(w);
                self.push(at, Event::Mine { pop, epoch });
            }
        }
    }

    fn on_mine(&mut self, pop: Population, epoch: u64) -> Result<(), SimError> {
        let st = &mut self.mining[pop_index(pop)];
        if st.epoch != epoch {
            return Ok(());
        }
        let config = st.config.expect("mining implies a puzzle");
        let key = st.keys_used;
        st.keys_used += 1;
        if let Some(w) = exp_wait(&mut st.rng, st.rate) {
            let at = self.now + Time::from_secs_f64(w);
            self.push(at, Event::Mine { pop, epoch });
        }
        let obs = self.observer_for(pop);
        let Some(puzzle) = self.nodes[obs].replica.puzzle().cloned() else {
            return Ok(());
        };
        let pk = self.miner_key(pop, key).public();
        self.found(
            pop,
            key,
            PowSolution {
                pk,
                nonce: 0,
                puzzle,
            },
            config,
        )
    }

    fn on_mine_tick(&mut self) -> Result<(), SimError> {
        let tick = self.tick();
        self.push(self.now + tick, Event::MineTick);
        for pop in [Population::Honest, Population::Adversary] {
            let obs = self.observer_for(pop);
            let Some(puzzle) = self.nodes[obs].replica.puzzle().cloned() else {
                continue;
            };
            let threshold = self.genesis.threshold;
            let st = &mut self.mining[pop_index(pop)];
            let Some(config) = st.config else { continue };
            let hashes = st.budget.take(st.hashrate, tick.as_secs_f64());
            if hashes == 0 {
                continue;
            }
            let key = st.keys_used;
            let cursor = st.cursor;
            let pk = self.miner_key(pop, key).public();
            match mine(&puzzle, &pk, &threshold, cursor, hashes) {
                Some(nonce) => {
                    let st = &mut self.mining[pop_index(pop)];
                    st.keys_used += 1;
                    st.cursor = 0;
                    self.found(pop, key, PowSolution { pk, nonce, puzzle }, config)?;
                }
                None => self.mining[pop_index(pop)].cursor += hashes,
            }
        }
        Ok(())
    }

    fn miner_key(&self, pop: Population, i: usize) -> Keypair {
        let role = match pop {
            Population::Honest => "honest-miner",
            Population::Adversary => "adversary-miner",
        };
        self.crypto.keypair_from_seed(&key_seed(self.sc.seed, role, i))
    }

    /// Adversary seats after admitting one more adversary member stay at or
    /// below f.
    fn keep_f_ok(&self) -> bool {
        let obs = self.observer_for(Population::Adversary);
        let committee = self.nodes[obs].replica.ledger().committee();
        let byz = committee
            .keys()
            .filter(|pk| self.by_key.get(pk).is_some_and(|&k| self.nodes[k].adversarial))
            .count();
        let oldest_byz = self
            .by_key
            .get(&committee.oldest().public_key)
            .is_some_and(|&k| self.nodes[k].adversarial);
        byz + 1 - usize::from(oldest_byz) <= committee.f()
    }

    fn found(&mut self, pop: Population, key: usize, sol: PowSolution, config: u64) -> Result<(), SimError> {
        let publish = match pop {
            Population::Honest => true,
            Population::Adversary => match self.sc.adversary.miner {
                MinerStrategy::None => false,
                MinerStrategy::Publish => true,
                MinerStrategy::KeepF => self.keep_f_ok(),
                MinerStrategy::PowWithholder => {
                    let at = self.now + Time::from_secs_f64(self.sc.adversary.hold);
                    let obs = self.observer_for(pop);
                    self.trace.push(Record::new(self.now, obs, "pow_withheld").detail(format!("config {config}")));
                    self.push(at, Event::Release { key, sol, config });
                    return Ok(());
                }
            },
        };
        if publish {
            self.publish(pop, key, sol, config)
        } else {
            let obs = self.observer_for(pop);
            self.trace.push(Record::new(self.now, obs, "pow_discarded").detail(format!("config {config}")));
            self.data.pows.push(PowRec {
                time: self.now,
                pop,
                config,
                published: false,
                node: None,
            });
            Ok(())
        }
    }

    /// Spawn the finder as a node of its own and hand it the solution.
    fn publish(&mut self, pop: Population, key: usize, sol: PowSolution, config: u64) -> Result<(), SimError> {
        let obs = self.observer_for(pop);
        let k = self.miner_key(pop, key);
        let replica = self.nodes[obs].replica.fork_with_key(k);
        let (role, adversarial, strategy, label) = match pop {
            Population::Honest => (Role::HonestMiner, false, StrategyKind::Honest, format!("h{key}")),
            Population::Adversary => {
                let ss = &self.sc.adversary.member_strategies;
                let s = ss[self.strategy_cursor % ss.len()];
                self.strategy_cursor += 1;
                (Role::AdversaryMiner, true, s, format!("a{key}"))
            }
        };
        let idx = self.nodes.len();
        self.by_key.insert(replica.public_key(), idx);
        self.nodes.push(Node {
            label,
            role,
            adversarial,
            strategy,
            replica,
            crashed: false,
            spawned_at: self.now,
            egress: Egress::default(),
            next_seq: 0,
        });
        if strategy == StrategyKind::Crash {
            let at = self.now + self.random_crash_delay();
            self.push(at, Event::Crash { node: idx });
        }
        self.trace
            .push(Record::new(self.now, idx, "pow_found").detail(format!("config {config} {}", role.as_str())));
        self.data.pows.push(PowRec {
            time: self.now,
            pop,
            config,
            published: true,
            node: Some(idx),
        });
        self.apply_checked(idx, Input::PowFound(sol), 0)
    }

    fn inject(&mut self) -> Result<(), SimError> {
        if self.inject_honest_pow()?.is_none() {
            // Puzzle not known yet; try again shortly.
            self.push(self.now + self.tick(), Event::Inject);
        }
        Ok(())
    }

    /// Publish an honest PoW for the observer's current puzzle right now.
    pub fn inject_honest_pow(&mut self) -> Result<Option<usize>, SimError> {
        self.start();
        let Some(puzzle) = self.nodes[self.honest_obs].replica.puzzle().cloned() else {
            return Ok(None);
        };
        let config = self.nodes[self.honest_obs].replica.ledger().config();
        let st = &mut self.mining[0];
        let key = st.keys_used;
        st.keys_used += 1;
        let pk = self.miner_key(Population::Honest, key).public();
        let threshold = self.genesis.threshold;
        let nonce = mine(&puzzle, &pk, &threshold, 0, u64::MAX).expect("difficulty is bounded");
        self.depth = 0;
        self.publish(Population::Honest, key, PowSolution { pk, nonce, puzzle }, config)?;
        Ok(Some(self.nodes.len() - 1))
    }

    fn on_load(&mut self) -> Result<(), SimError> {
        let committee: Vec<usize> = self
            .observer_ledger()
            .committee()
            .keys()
            .filter_map(|pk| self.by_key.get(pk).copied())
            .collect();
        if self.sc.load.tx_rate > 0.0 && self.clients.len() >= 2 {
            let a = self.load_rng.gen_range(0..self.clients.len());
            let mut b = self.load_rng.gen_range(0..self.clients.len() - 1);
            if b >= a {
                b += 1;
            }
            let (from, to) = (self.clients[a].public(), self.clients[b].public());
            let seq = self.client_seq[a];
            self.client_seq[a] += 1;
            let tx = Transaction {
                from,
                to,
                amount: 1,
                seq,
                sig: self
                    .crypto
                    .sign(&self.clients[a], &Transaction::signing_bytes(&from, &to, 1, seq)),
            };
            // A client submits to f+1 members so at least one is honest.
            let k = (self.sc.f + 1).min(committee.len());
            let picks: Vec<usize> = sample(&mut self.load_rng, committee.len(), k).into_iter().collect();
            for p in picks {
                let i = committee[p];
                if self.nodes[i].strategy != StrategyKind::SelfDealing {
                    self.apply_checked(i, Input::Transactions(vec![tx.clone()]), 0)?;
                }
            }
        }
        for i in committee {
            let node = &mut self.nodes[i];
            if node.strategy != StrategyKind::SelfDealing || node.crashed {
                continue;
            }
            let seq = node.next_seq.max(node.replica.ledger().state().next_seq(&node.public_key()));
            node.next_seq = seq + 1;
            let tx = strategy::self_dealing_tx(node.replica.keypair(), seq, self.crypto.as_ref());
            self.apply_checked(i, Input::Transactions(vec![tx]), 0)?;
        }
        Ok(())
    }

    pub fn finish(self) -> RunOutput {
        let reference = self.reference_ledger().clone();
        let seat_owner = |pk: &PublicKey| self.by_key.get(pk).map(|&k| &self.nodes[k]);
        let adversary_seats = reference
            .committee()
            .keys()
            .filter(|pk| seat_owner(pk).is_some_and(|n| n.adversarial))
            .count();
        let honest_seats = reference.committee().n() - adversary_seats;

        let mut races = Vec::new();
        for c in 2..=reference.config() {
            let Some((slot, _)) = reference.creating_decision(c) else { continue };
            let Some(entry) = reference.entry(slot) else { continue };
            let SlotValue::Reconfig(ev) = entry.value.as_ref() else { continue };
            let Some(node) = seat_owner(&ev.new_member) else { continue };
            let winner = if node.adversarial {
                Population::Adversary
            } else {
                Population::Honest
            };
            let committed = self.data.first_commit.get(&slot).copied().unwrap_or(self.now);
            races.push(RaceRecord {
                config: c,
                winner,
                member: node.label.clone(),
                found_at: node.spawned_at.as_secs_f64(),
                committed_at: committed.as_secs_f64(),
                latency: committed.saturating_sub(node.spawned_at).as_secs_f64(),
                honest_learned: self.data.learned.get(&(c - 1, Population::Honest)).map(|t| t.as_secs_f64()),
                adversary_learned: self
                    .data
                    .learned
                    .get(&(c - 1, Population::Adversary))
                    .map(|t| t.as_secs_f64()),
            });
        }

        let mut gaps = Vec::new();
        let mut prev = Time::ZERO;
        for s in 1..=reference.len() {
            if let Some(&t) = self.data.first_commit.get(&s) {
                gaps.push(t.saturating_sub(prev).as_secs_f64());
                prev = t;
            }
        }
        let max_commit_latency = gaps.iter().copied().fold(0.0, f64::max);

        let mut pow = PowCounts::default();
        for p in &self.data.pows {
            match p.pop {
                Population::Honest => pow.honest += 1,
                Population::Adversary => pow.adversary += 1,
            }
            if p.published {
                pow.published += 1;
            } else {
                pow.discarded += 1;
            }
        }

        let targets_met = self.targets_met();
        let infos: Vec<checks::NodeInfo> = self
            .nodes
            .iter()
            .map(|n| checks::NodeInfo {
                label: n.label.clone(),
                pk: n.public_key(),
                honest: n.honest(),
                miner: matches!(n.role, Role::HonestMiner | Role::AdversaryMiner),
            })
            .collect();
        let (checks, violations) = checks::evaluate(&checks::CheckInput {
            sc: &self.sc,
            data: &self.data,
            ledger: &reference,
            nodes: &infos,
            end: self.now,
            targets_met,
        });
        let safety_ok = checks.iter().find(|c| c.name == "safety").is_none_or(|c| c.passed);

        let report = RunReport {
            scenario: self.sc.name.clone(),
            scenario_digest: self.sc.digest().to_hex(),
            seed: self.sc.seed,
            safety_ok,
            slots_committed: reference.len(),
            reconfig_count: reference.config() - 1,
            adversary_seats,
            honest_seats,
            max_commit_latency,
            end_time: self.now.as_secs_f64(),
            targets_met,
            stop_reason: self.stop_reason.unwrap_or("stepped").to_string(),
            pow,
            races,
            latency_histogram: histogram(&gaps, self.sc.delta),
            checks,
            violations,
        };
        RunOutput {
            report,
            trace: self.trace,
            export: reference.export(),
        }
    }
}

/// Load, run and report in one call.
pub fn run_scenario(sc: Scenario) -> Result<RunOutput, SimError> {
    Sim::new(sc)?.run()
}
