use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::*;
use crate::crypto::{SimCrypto, Threshold};
use crate::ledger::Genesis;
use crate::types::SlotValue;

const DELTA: Time = Time(1_000_000);

enum Ev {
    Deliver { to: usize, from: PublicKey, msg: Arc<Message> },
    Timer { node: usize, id: TimerId },
}

/// Fixed-delay network: every message takes exactly Δ.
struct Net {
    nodes: Vec<Replica>,
    queue: BinaryHeap<Reverse<(Time, u8, u64)>>,
    events: HashMap<u64, Ev>,
    seq: u64,
    now: Time,
    commits: Vec<Vec<(u64, Time)>>,
    notes: Vec<(usize, Note)>,
    silent: HashSet<usize>,
}

fn keys(n: usize) -> Vec<Keypair> {
    (0..n)
        .map(|i| SimCrypto.keypair_from_seed(format!("node{i}").as_bytes()))
        .collect()
}

impl Net {
    fn new(members: usize, observers: usize, threshold: Threshold) -> Self {
        let ks = keys(members + observers);
        let pks: Vec<_> = ks[..members].iter().map(|k| k.public()).collect();
        let genesis = Genesis {
            committee: pks,
            balances: Default::default(),
            threshold,
        };
        let crypto: Arc<dyn CryptoProvider> = Arc::new(SimCrypto);
        let nodes = ks
            .into_iter()
            .map(|k| Replica::new(ReplicaConfig::new(DELTA), crypto.clone(), k, genesis.clone()).unwrap())
            .collect::<Vec<_>>();
        let n = nodes.len();
        Self {
            nodes,
            queue: BinaryHeap::new(),
            events: HashMap::new(),
            seq: 0,
            now: Time::ZERO,
            commits: vec![Vec::new(); n],
            notes: Vec::new(),
            silent: HashSet::new(),
        }
    }

    fn push(&mut self, at: Time, ev: Ev) {
        let class = matches!(ev, Ev::Timer { .. }) as u8;
        self.seq += 1;
        self.events.insert(self.seq, ev);
        self.queue.push(Reverse((at, class, self.seq)));
    }

    fn index_of(&self, pk: &PublicKey) -> Option<usize> {
        self.nodes.iter().position(|r| r.public_key() == *pk)
    }

    fn apply(&mut self, node: usize, input: Input) {
        let actions = self.nodes[node].handle(input, self.now);
        let from = self.nodes[node].public_key();
        for a in actions {
            match a {
                Action::Send { to, msg } => {
                    if self.silent.contains(&node) {
                        continue;
                    }
                    for pk in to {
                        if let Some(i) = self.index_of(&pk) {
                            self.push(self.now + DELTA, Ev::Deliver { to: i, from, msg: msg.clone() });
                        }
                    }
                }
                Action::Propagate { msg } => {
                    if self.silent.contains(&node) {
                        continue;
                    }
                    for i in 0..self.nodes.len() {
                        if i != node {
                            self.push(self.now + DELTA, Ev::Deliver { to: i, from, msg: msg.clone() });
                        }
                    }
                }
                Action::StartTimer { id, after, .. } => self.push(self.now + after, Ev::Timer { node, id }),
                Action::CommitSlot { slot, .. } => self.commits[node].push((slot, self.now)),
                Action::Note(n) => self.notes.push((node, n)),
                Action::CancelTimer { .. } | Action::EnterView { .. } => {}
            }
        }
    }

    fn start(&mut self) {
        for i in 0..self.nodes.len() {
            self.apply(i, Input::Start);
        }
    }

    fn run_until(&mut self, t: Time) {
        while let Some(Reverse((at, _, seq))) = self.queue.peek().copied() {
            if at > t {
                break;
            }
            self.queue.pop();
            self.now = at;
            match self.events.remove(&seq).unwrap() {
                Ev::Deliver { to, from, msg } => self.apply(to, Input::Message { from, msg }),
                Ev::Timer { node, id } => self.apply(node, Input::Timer(id)),
            }
        }
        self.now = t;
    }

    fn assert_consistent(&self) {
        let longest = self.nodes.iter().max_by_key(|r| r.ledger().len()).unwrap().ledger();
        for r in &self.nodes {
            for e in r.ledger().entries() {
                assert_eq!(longest.entry(e.slot).unwrap().digest, e.digest, "fork at slot {}", e.slot);
            }
        }
    }
}

#[test]
fn steady_state_commits_every_three_deltas() {
    let mut net = Net::new(4, 0, Threshold::ZERO);
    net.start();
    net.run_until(DELTA * 20);
    for c in &net.commits {
        assert!(c.len() >= 6, "{c:?}");
        // propose, prepare, commit: each slot takes 3Δ.
        for (i, (slot, t)) in c.iter().enumerate() {
            assert_eq!(*slot, i as u64 + 1);
            assert_eq!(*t, DELTA * (3 * (i as u64 + 1)));
        }
    }
    net.assert_consistent();
}

#[test]
fn silent_leader_is_replaced() {
    let mut net = Net::new(4, 0, Threshold::ZERO);
    // The genesis leader is the first member.
    net.silent.insert(0);
    net.start();
    net.run_until(DELTA * 60);
    let vcs = net
        .notes
        .iter()
        .filter(|(_, n)| matches!(n, Note::ViewChangeSent { view } if *view == ViewTuple::new(1, 0, 0)))
        .count();
    assert_eq!(vcs, 4);
    for i in 1..4 {
        assert!(net.nodes[i].ledger().len() >= 3, "node {i} stuck");
        assert!(net.nodes[i].view() > ViewTuple::new(1, 0, 0));
    }
    net.assert_consistent();
}

#[test]
fn proposal_refusals() {
    let mut net = Net::new(4, 0, Threshold::ZERO);
    net.start();
    let now = net.now;
    // The leader already proposed slot 1 on start.
    let err = net.nodes[0].make_proposal(Vec::new(), now).unwrap_err();
    assert_eq!(
        err,
        ProtocolError::AlreadyProposed {
            view: ViewTuple::new(1, 0, 0),
            slot: 1
        }
    );
    let err = net.nodes[1].make_proposal(Vec::new(), now).unwrap_err();
    assert_eq!(err, ProtocolError::NotLeader(ViewTuple::new(1, 0, 0)));
    assert!(net.nodes[1].is_fresh(1).unwrap());
    assert!(!net.nodes[1].is_fresh(0).unwrap());
}

#[test]
fn status_reports_head_and_accepted_value() {
    let mut net = Net::new(4, 0, Threshold::ZERO);
    net.start();
    // After 2Δ every member has a prepare quorum for slot 1 but no commits.
    net.run_until(DELTA * 2);
    let s = net.nodes[2].make_status(ViewTuple::new(1, 0, 1));
    let h = s.status();
    assert_eq!((h.last_slot, h.slot), (0, 1));
    assert_eq!(h.last_digest, net.nodes[2].ledger().digest_at(0).unwrap());
    assert_eq!(h.accepted.map(|a| a.0), Some(ViewTuple::new(1, 0, 0)));
    assert!(s.accept_cert.is_some() && s.accepted_body.is_some());
    assert!(s.commit_cert.is_none());
    net.run_until(DELTA * 3);
    let s = net.nodes[2].make_status(ViewTuple::new(1, 0, 1));
    assert_eq!(s.status().last_slot, 1);
    assert!(s.status().accepted.is_none());
    assert!(s.commit_cert.is_some());
}

#[test]
fn pow_finder_is_admitted_and_leads_the_next_configuration() {
    let mut net = Net::new(4, 1, Threshold::MAX);
    net.start();
    net.run_until(DELTA * 7);
    let obs = 4;
    let pk = net.nodes[obs].public_key();
    let puzzle = net.nodes[obs].puzzle().unwrap().clone();
    net.apply(
        obs,
        Input::PowFound(PowSolution {
            pk,
            nonce: 0,
            puzzle,
        }),
    );
    net.run_until(DELTA * 40);
    for i in 1..5 {
        let r = &net.nodes[i];
        assert_eq!(r.ledger().config(), 2, "node {i}");
        assert!(r.ledger().committee().contains(&pk));
    }
    assert!(!net.nodes[0].is_member());
    assert!(net.nodes[obs].is_member());
    let cases: Vec<_> = net
        .notes
        .iter()
        .filter_map(|(_, n)| match n {
            Note::ExternalCase { case, .. } => Some(*case),
            _ => None,
        })
        .collect();
    assert_eq!(cases.len(), 1);
    // The new member leads (2,0,0) and keeps the chain growing.
    let start = net.nodes[1].ledger().config_start(2).unwrap();
    assert!(net.nodes[1].ledger().len() > start + 2);
    let after = net.nodes[1].ledger().entry(start + 1).unwrap();
    assert_eq!(after.cert.view(), Some(ViewTuple::new(2, 0, 0)));
    assert!(matches!(
        net.nodes[1].ledger().entry(start).unwrap().value.as_ref(),
        SlotValue::Reconfig(_)
    ));
    // Observers learn the new puzzle from propagated decisions.
    assert!(net.notes.iter().any(|(i, n)| *i == 0 && *n == Note::PuzzleLearned { config: 2 }));
    net.assert_consistent();
}

#[test]
fn stale_pow_is_rejected_after_reconfiguration() {
    let mut net = Net::new(4, 2, Threshold::MAX);
    net.start();
    net.run_until(DELTA * 7);
    let stale = net.nodes[5].puzzle().unwrap().clone();
    let pk4 = net.nodes[4].public_key();
    let p4 = net.nodes[4].puzzle().unwrap().clone();
    net.apply(4, Input::PowFound(PowSolution { pk: pk4, nonce: 0, puzzle: p4 }));
    net.run_until(DELTA * 40);
    assert_eq!(net.nodes[1].ledger().config(), 2);
    let pk5 = net.nodes[5].public_key();
    net.apply(5, Input::PowFound(PowSolution { pk: pk5, nonce: 0, puzzle: stale }));
    assert!(net
        .notes
        .iter()
        .any(|(i, n)| *i == 5 && matches!(n, Note::Rejected { kind: "pow", .. })));
}
