//! The per-participant state machine.
//!
//! One [`Replica`] type plays every role: committee member, observer (miners,
//! users) and external leader after finding a PoW. Inputs are applied one at
//! a time with the current virtual time; the replica answers with a list of
//! [`Action`]s for the harness to carry out. Messages a replica sends to
//! itself are looped back internally before `handle` returns.

mod external;
mod steady;
mod view_change;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::sync::Arc;

use serde::Serialize;

use crate::certificate::Certificate;
use crate::crypto::{CryptoProvider, Keypair};
use crate::error::ProtocolError;
use crate::ledger::{Genesis, Ledger};
use crate::message::{Message, ReproposeMsg, SignedHeader, StatusMsg};
use crate::reconfig::ReconfigCase;
use crate::schedule::{leader_of, LeaderRef};
use crate::types::{Body, Digest, PowSolution, PublicKey, Puzzle, Time, Transaction, ViewTuple};

pub use external::ExternalLeader;

#[derive(Clone, Debug)]
pub struct ReplicaConfig {
    pub delta: Time,
    pub max_batch: usize,
    /// Leaders propose empty batches when the pool is empty. Without this an
    /// idle honest leader is indistinguishable from a silent one.
    pub propose_empty: bool,
}

impl ReplicaConfig {
    pub fn new(delta: Time) -> Self {
        Self {
            delta,
            max_batch: 64,
            propose_empty: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct TimerId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TimerKind {
    /// 4Δ per slot.
    SlotProgress,
    /// 2Δ after forwarding a view-change certificate.
    NewViewWait,
    /// 8Δ after entering a view or lifespan.
    LeaderGrace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Guard {
    /// Fires iff the view and ledger length are unchanged.
    Progress { view: ViewTuple, len: u64 },
    /// Fires iff `target` (or higher) has not been entered.
    NewViewWait { target: ViewTuple },
}

#[derive(Clone, Debug)]
pub enum Input {
    Start,
    Message { from: PublicKey, msg: Arc<Message> },
    Timer(TimerId),
    Transactions(Vec<Transaction>),
    PowFound(PowSolution),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "note", rename_all = "snake_case")]
pub enum Note {
    Equivocation { view: ViewTuple, slot: u64, signer: PublicKey },
    PuzzleLearned { config: u64 },
    ViewChangeSent { view: ViewTuple },
    ExternalCase { view: ViewTuple, case: ReconfigCase, s_star: u64 },
    Terminated { view: ViewTuple, reason: &'static str },
    JoinedCommittee { config: u64 },
    LeftCommittee { config: u64 },
    Rejected { kind: &'static str, reason: String },
}

#[derive(Clone, Debug)]
pub enum Action {
    /// Point-to-point sends; never includes the sender itself.
    Send { to: Vec<PublicKey>, msg: Arc<Message> },
    /// Hand a message to the wider peer-to-peer network (non-members).
    Propagate { msg: Arc<Message> },
    StartTimer { id: TimerId, kind: TimerKind, after: Time },
    CancelTimer { id: TimerId },
    CommitSlot { slot: u64, digest: Digest, value: Body, view: ViewTuple, config: u64 },
    EnterView { view: ViewTuple },
    Note(Note),
}

#[derive(Clone, Debug)]
struct Accepted {
    slot: u64,
    view: ViewTuple,
    digest: Digest,
    cert: Arc<Certificate>,
}

/// Votes keyed by `(slot, view, digest)` so a slot's votes form one range.
type Votes = BTreeMap<(u64, ViewTuple, Digest), BTreeMap<PublicKey, SignedHeader>>;

/// A notify (or propagated decision) waiting for its slot.
#[derive(Clone, Debug)]
struct PendingDecision {
    digest: Digest,
    cert: Arc<Certificate>,
    from: PublicKey,
}

#[derive(Clone, Debug)]
pub struct Replica {
    cfg: ReplicaConfig,
    crypto: Arc<dyn CryptoProvider>,
    key: Keypair,
    ledger: Ledger,
    now: Time,

    view: ViewTuple,
    view_leader: Option<PublicKey>,
    /// Slots strictly above the watermark are fresh in the current view.
    watermark: Option<u64>,
    grace_until: Time,
    vc_sent: BTreeSet<ViewTuple>,
    forwarded: BTreeSet<ViewTuple>,
    led: BTreeSet<ViewTuple>,

    accepted: Option<Accepted>,
    prepared: BTreeSet<(ViewTuple, u64)>,
    commit_sent: BTreeSet<(ViewTuple, u64)>,
    my_proposals: BTreeMap<(ViewTuple, u64), Digest>,
    proposals: BTreeMap<(ViewTuple, u64), BTreeMap<PublicKey, Digest>>,
    /// `(view, slot, h')` established by a valid re-proposal.
    reproposal: Option<(ViewTuple, u64, Digest)>,
    pending_reproposals: BTreeMap<ViewTuple, Vec<Arc<ReproposeMsg>>>,
    prepares: Votes,
    commits: Votes,
    view_changes: BTreeMap<ViewTuple, BTreeMap<PublicKey, SignedHeader>>,
    statuses: BTreeMap<ViewTuple, Vec<Arc<StatusMsg>>>,
    pending_summaries: BTreeMap<ViewTuple, crate::status::StatusSummary>,
    decisions: BTreeMap<u64, Vec<PendingDecision>>,
    notify_headers: BTreeMap<u64, Vec<SignedHeader>>,
    notified: BTreeSet<u64>,
    bodies: HashMap<Digest, Body>,
    wanted: HashSet<Digest>,
    asked: HashSet<(Digest, PublicKey)>,
    future: Vec<(PublicKey, Arc<Message>)>,

    pow_seen: HashSet<(PublicKey, u64)>,
    finders: BTreeMap<u64, PublicKey>,
    max_claim: u64,
    puzzle: Option<Puzzle>,
    puzzle_headers: BTreeMap<PublicKey, SignedHeader>,
    external: Option<ExternalLeader>,

    txpool: VecDeque<Transaction>,
    loopback: VecDeque<(PublicKey, Arc<Message>)>,
    actions: Vec<Action>,
    next_timer: u64,
    timers: HashMap<TimerId, Guard>,
    progress_timer: Option<TimerId>,
}

const FUTURE_CAP: usize = 1 << 16;

impl Replica {
    pub fn new(
        cfg: ReplicaConfig,
        crypto: Arc<dyn CryptoProvider>,
        key: Keypair,
        genesis: Genesis,
    ) -> Result<Self, ProtocolError> {
        let ledger = Ledger::new(genesis)?;
        Ok(Self {
            cfg,
            crypto,
            key,
            ledger,
            now: Time::ZERO,
            view: ViewTuple::new(1, 0, 0),
            view_leader: None,
            watermark: Some(0),
            grace_until: Time::ZERO,
            vc_sent: BTreeSet::new(),
            forwarded: BTreeSet::new(),
            led: BTreeSet::new(),
            accepted: None,
            prepared: BTreeSet::new(),
            commit_sent: BTreeSet::new(),
            my_proposals: BTreeMap::new(),
            proposals: BTreeMap::new(),
            reproposal: None,
            pending_reproposals: BTreeMap::new(),
            prepares: BTreeMap::new(),
            commits: BTreeMap::new(),
            view_changes: BTreeMap::new(),
            statuses: BTreeMap::new(),
            pending_summaries: BTreeMap::new(),
            decisions: BTreeMap::new(),
            notify_headers: BTreeMap::new(),
            notified: BTreeSet::new(),
            bodies: HashMap::new(),
            wanted: HashSet::new(),
            asked: HashSet::new(),
            future: Vec::new(),
            pow_seen: HashSet::new(),
            finders: BTreeMap::new(),
            max_claim: 0,
            puzzle: Some(Puzzle::genesis()),
            puzzle_headers: BTreeMap::new(),
            external: None,
            txpool: VecDeque::new(),
            loopback: VecDeque::new(),
            actions: Vec::new(),
            next_timer: 0,
            timers: HashMap::new(),
            progress_timer: None,
        })
    }

    /// A copy of this replica's knowledge under a different identity. Used
    /// to turn the shared honest-miner view into a concrete PoW finder.
    pub fn fork_with_key(&self, key: Keypair) -> Self {
        let mut r = self.clone();
        r.key = key;
        r.external = None;
        r.loopback.clear();
        r.actions.clear();
        r.timers.clear();
        r.progress_timer = None;
        r
    }

    pub fn public_key(&self) -> PublicKey {
        self.key.public()
    }

    pub fn keypair(&self) -> &Keypair {
        &self.key
    }

    pub fn crypto(&self) -> &Arc<dyn CryptoProvider> {
        &self.crypto
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn view(&self) -> ViewTuple {
        self.view
    }

    pub fn view_leader(&self) -> Option<PublicKey> {
        self.view_leader
    }

    pub fn config(&self) -> &ReplicaConfig {
        &self.cfg
    }

    pub fn is_member(&self) -> bool {
        self.ledger.committee().contains(&self.key.public())
    }

    pub fn puzzle(&self) -> Option<&Puzzle> {
        self.puzzle.as_ref()
    }

    pub fn external(&self) -> Option<&ExternalLeader> {
        self.external.as_ref()
    }

    pub fn max_claim(&self) -> u64 {
        self.max_claim
    }

    pub fn pool_len(&self) -> usize {
        self.txpool.len()
    }

    /// Whether `slot` is fresh in the current view.
    pub fn is_fresh(&self, slot: u64) -> Result<bool, ProtocolError> {
        match self.watermark {
            Some(w) => Ok(slot > w),
            None => Err(ProtocolError::NoWatermark(self.view)),
        }
    }

    pub fn handle(&mut self, input: Input, now: Time) -> Vec<Action> {
        self.now = now;
        match input {
            Input::Start => self.on_start(),
            Input::Message { from, msg } => self.on_message(from, msg),
            Input::Timer(id) => self.on_timer(id),
            Input::Transactions(txs) => {
                self.txpool.extend(txs);
                self.try_progress();
            }
            Input::PowFound(sol) => self.on_pow_found(sol),
        }
        self.drain_loopback();
        std::mem::take(&mut self.actions)
    }

    fn drain_loopback(&mut self) {
        while let Some((from, msg)) = self.loopback.pop_front() {
            self.on_message(from, msg);
        }
    }

    fn on_start(&mut self) {
        self.actions.push(Action::Note(Note::PuzzleLearned { config: 1 }));
        if self.is_member() {
            self.view_leader = self.leader_key(self.view);
            self.actions.push(Action::EnterView { view: self.view });
            self.start_progress_timer(TimerKind::SlotProgress);
            self.try_progress();
        }
    }

    fn on_message(&mut self, from: PublicKey, msg: Arc<Message>) {
        if let Some(v) = msg.view() {
            let config_bound = !matches!(
                msg.as_ref(),
                Message::Notify { .. } | Message::Decision { .. } | Message::Reveal { .. }
            );
            if config_bound && v.c > self.ledger.config() {
                if self.future.len() < FUTURE_CAP {
                    self.future.push((from, msg));
                }
                return;
            }
        }
        match msg.as_ref() {
            Message::Propose { header, body } => self.on_propose(header, body),
            Message::Prepare(h) => self.on_vote(h, true),
            Message::Commit(h) => self.on_vote(h, false),
            Message::Notify { header, cert } => self.on_notify(from, header, cert),
            Message::Decision { header, cert, body } => {
                self.store_body(body);
                self.on_notify(from, header, cert);
            }
            Message::Reveal { cert, body } => self.on_reveal(from, cert, body),
            Message::ViewChange(h) => self.on_view_change(h),
            Message::ForwardVc { cert } => self.on_forward_vc(cert),
            Message::NewView { header, cert } => self.on_new_view(header, cert),
            Message::Status(s) => self.on_status(s),
            Message::Repropose(r) => self.on_repropose(r),
            Message::PowAnnounce { header, solution } => {
                self.on_pow_announce(&msg, header, solution)
            }
            Message::BodyRequest { digest } => {
                if let Some(body) = self.bodies.get(digest).cloned() {
                    self.send(vec![from], Message::BodyResponse { body });
                }
            }
            Message::BodyResponse { body } => {
                if self.wanted.remove(&body.digest()) {
                    self.store_body(body);
                    self.try_progress();
                }
            }
        }
    }

    fn on_timer(&mut self, id: TimerId) {
        let Some(guard) = self.timers.remove(&id) else {
            return;
        };
        if self.progress_timer == Some(id) {
            self.progress_timer = None;
        }
        if !self.is_member() {
            return;
        }
        match guard {
            Guard::Progress { view, len } => {
                if self.view == view && self.ledger.len() == len {
                    self.send_view_change(view);
                }
            }
            Guard::NewViewWait { target } => {
                if self.view < target {
                    self.send_view_change(target);
                }
            }
        }
    }

    // ---- plumbing shared by the sub-protocols ----

    fn sign(&self, header: crate::message::Header) -> SignedHeader {
        SignedHeader::sign(header, &self.key, self.crypto.as_ref())
    }

    fn send(&mut self, to: Vec<PublicKey>, msg: Message) {
        let me = self.key.public();
        let msg = Arc::new(msg);
        let mut to_self = false;
        let to: Vec<PublicKey> = to
            .into_iter()
            .filter(|pk| {
                if *pk == me {
                    to_self = true;
                    false
                } else {
                    true
                }
            })
            .collect();
        if to_self {
            self.loopback.push_back((me, msg.clone()));
        }
        if !to.is_empty() {
            self.actions.push(Action::Send { to, msg });
        }
    }

    /// Send to every current committee member, including ourselves.
    fn broadcast(&mut self, msg: Message) {
        let to = self.ledger.committee().keys().copied().collect();
        self.send(to, msg);
    }

    fn note(&mut self, n: Note) {
        self.actions.push(Action::Note(n));
    }

    fn start_timer(&mut self, kind: TimerKind, after: Time, guard: Guard) -> TimerId {
        let id = TimerId(self.next_timer);
        self.next_timer += 1;
        self.timers.insert(id, guard);
        self.actions.push(Action::StartTimer { id, kind, after });
        id
    }

    /// (Re)start the single progress timer for the current view and slot.
    /// A slot timer never expires before an outstanding view grace period.
    fn start_progress_timer(&mut self, kind: TimerKind) {
        if let Some(old) = self.progress_timer.take() {
            self.timers.remove(&old);
            self.actions.push(Action::CancelTimer { id: old });
        }
        let d = self.cfg.delta;
        let after = match kind {
            TimerKind::LeaderGrace => {
                self.grace_until = self.now + d * 8;
                d * 8
            }
            _ => {
                let until = (self.now + d * 4).max(self.grace_until);
                until.saturating_sub(self.now)
            }
        };
        let guard = Guard::Progress {
            view: self.view,
            len: self.ledger.len(),
        };
        self.progress_timer = Some(self.start_timer(kind, after, guard));
    }

    fn store_body(&mut self, body: &Body) {
        self.bodies.entry(body.digest()).or_insert_with(|| body.clone());
    }

    fn request_body(&mut self, digest: Digest, from: PublicKey) {
        if self.bodies.contains_key(&digest) || from == self.key.public() {
            return;
        }
        self.wanted.insert(digest);
        if self.asked.insert((digest, from)) {
            self.send(vec![from], Message::BodyRequest { digest });
        }
    }

    fn leader_key(&self, view: ViewTuple) -> Option<PublicKey> {
        let finder = self.finders.get(&view.e).copied();
        match leader_of(view, self.ledger.committee(), finder, self.crypto.as_ref()) {
            Ok(l) => l.key(),
            Err(_) => None,
        }
    }

    fn member_leader(&self, view: ViewTuple) -> Option<PublicKey> {
        match leader_of(view, self.ledger.committee(), None, self.crypto.as_ref()) {
            Ok(LeaderRef::Member(m)) => Some(m.public_key),
            _ => None,
        }
    }

    fn is_committee_signer(&self, h: &SignedHeader) -> bool {
        self.ledger.committee().contains(&h.signer) && h.verify(self.crypto.as_ref())
    }
}

#[cfg(test)]
mod tests;
