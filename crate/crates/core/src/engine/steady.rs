//! Normal-case operation: propose, prepare, commit, notify, and the
//! committee hand-over after a committed reconfiguration.

use std::collections::VecDeque;
use std::sync::Arc;

use super::{Accepted, Action, Note, PendingDecision, Replica, TimerKind, Votes};
use crate::certificate::{CertKind, Certificate};
use crate::error::ProtocolError;
use crate::message::{Header, Message, SignedHeader};
use crate::reconfig::{build_puzzle, PuzzleContext};
use crate::types::{Body, Digest, PublicKey, SlotValue, Time, Transaction, ViewTuple};

const PENDING_PER_SLOT: usize = 8;
const HEADERS_PER_SLOT: usize = 4096;

/// First `(view, digest)` with a quorum of votes for `slot`, optionally
/// restricted to one view.
fn quorum_in(
    votes: &Votes,
    slot: u64,
    view: Option<ViewTuple>,
    q: usize,
) -> Option<(ViewTuple, Digest, Vec<SignedHeader>)> {
    let lo = (slot, ViewTuple::new(0, 0, 0), Digest([0; 32]));
    let hi = (slot, ViewTuple::new(u64::MAX, u64::MAX, u64::MAX), Digest([0xff; 32]));
    votes
        .range(lo..=hi)
        .find(|((_, v, _), m)| view.is_none_or(|w| *v == w) && m.len() >= q)
        .map(|((_, v, d), m)| (*v, *d, m.values().take(q).cloned().collect()))
}

impl Replica {
    /// Propose `txs` for the next slot as the current leader.
    pub fn make_proposal(
        &mut self,
        txs: Vec<Transaction>,
        now: Time,
    ) -> Result<Vec<Action>, ProtocolError> {
        self.now = now;
        let view = self.view;
        let slot = self.ledger.len() + 1;
        if !self.is_member() || self.view_leader != Some(self.key.public()) {
            return Err(ProtocolError::NotLeader(view));
        }
        if !self.is_fresh(slot)? {
            return Err(ProtocolError::StaleSlot(slot));
        }
        if self.my_proposals.contains_key(&(view, slot)) {
            return Err(ProtocolError::AlreadyProposed { view, slot });
        }
        let value = SlotValue::TxBatch { transactions: txs };
        self.ledger.validate_next(&value, self.crypto.as_ref())?;
        self.propose_value(slot, Arc::new(value));
        self.drain_loopback();
        Ok(std::mem::take(&mut self.actions))
    }

    pub(super) fn propose_value(&mut self, slot: u64, body: Body) {
        let view = self.view_for_proposals();
        let digest = body.digest();
        // External leaders are not in the broadcast set and get no loopback.
        self.store_body(&body);
        self.my_proposals.insert((view, slot), digest);
        let header = self.sign(Header::Propose { view, slot, digest });
        self.broadcast(Message::Propose { header, body });
    }

    /// External leaders propose in their lifespan's first view.
    fn view_for_proposals(&self) -> ViewTuple {
        match &self.external {
            Some(x) if !self.is_member() => x.view,
            _ => self.view,
        }
    }

    pub(super) fn build_batch(&mut self) -> SlotValue {
        let crypto = self.crypto.clone();
        let mut state = self.ledger.state().clone();
        let mut txs = Vec::new();
        let mut deferred = VecDeque::new();
        while txs.len() < self.cfg.max_batch {
            let Some(tx) = self.txpool.pop_front() else {
                break;
            };
            match state.apply(&tx, crypto.as_ref()) {
                Ok(()) => txs.push(tx),
                Err(_) if tx.seq > state.next_seq(&tx.from) => deferred.push_back(tx),
                Err(_) => {}
            }
        }
        while let Some(tx) = deferred.pop_back() {
            self.txpool.push_front(tx);
        }
        SlotValue::TxBatch { transactions: txs }
    }

    pub(super) fn on_propose(&mut self, header: &SignedHeader, body: &Body) {
        let Header::Propose { view, slot, digest } = header.header else {
            return;
        };
        if !self.is_member()
            || view.c != self.ledger.config()
            || slot <= self.ledger.len()
            || body.digest() != digest
            || !header.verify(self.crypto.as_ref())
        {
            return;
        }
        let per_slot = self.proposals.entry((view, slot)).or_default();
        let conflict = match per_slot.get(&header.signer) {
            Some(d) if *d != digest => true,
            Some(_) => return,
            None => {
                per_slot.insert(header.signer, digest);
                false
            }
        };
        if conflict {
            self.note(Note::Equivocation {
                view,
                slot,
                signer: header.signer,
            });
            return;
        }
        self.store_body(body);
        self.try_progress();
    }

    pub(super) fn on_vote(&mut self, h: &SignedHeader, prepare: bool) {
        let (view, slot, digest) = match (&h.header, prepare) {
            (Header::Prepare { view, slot, digest }, true) | (Header::Commit { view, slot, digest }, false) => {
                (*view, *slot, *digest)
            }
            _ => return,
        };
        if view.c != self.ledger.config() || slot <= self.ledger.len() {
            return;
        }
        let q = self.ledger.committee().quorum();
        let votes = if prepare { &self.prepares } else { &self.commits };
        if let Some(m) = votes.get(&(slot, view, digest)) {
            if m.len() >= q || m.contains_key(&h.signer) {
                return;
            }
        }
        if !self.is_committee_signer(h) {
            return;
        }
        let votes = if prepare { &mut self.prepares } else { &mut self.commits };
        votes.entry((slot, view, digest)).or_default().insert(h.signer, h.clone());
        self.try_progress();
    }

    pub(super) fn on_notify(&mut self, from: PublicKey, header: &SignedHeader, cert: &Arc<Certificate>) {
        let Header::Notify { slot, digest, .. } = header.header else {
            return;
        };
        if slot <= self.ledger.len() {
            // Already decided: only useful as puzzle material.
            let c = self.ledger.config();
            if self.puzzle.is_none()
                && self.ledger.config_start(c) == Some(slot)
                && self.ledger.digest_at(slot) == Some(digest)
            {
                self.collect_puzzle_header(header);
            }
            return;
        }
        if cert.kind != CertKind::Commit || cert.slot() != Some(slot) || cert.digest() != Some(digest) {
            return;
        }
        let hs = self.notify_headers.entry(slot).or_default();
        if hs.len() < HEADERS_PER_SLOT {
            hs.push(header.clone());
        }
        let pending = self.decisions.entry(slot).or_default();
        if pending.len() < PENDING_PER_SLOT && !pending.iter().any(|p| Arc::ptr_eq(&p.cert, cert)) {
            pending.push(PendingDecision {
                digest,
                cert: cert.clone(),
                from,
            });
        }
        self.try_progress();
    }

    pub(super) fn on_reveal(&mut self, from: PublicKey, cert: &Arc<Certificate>, body: &Body) {
        let (Some(slot), Some(digest)) = (cert.slot(), cert.digest()) else {
            return;
        };
        if cert.kind != CertKind::Commit || body.digest() != digest || slot <= self.ledger.len() {
            return;
        }
        self.store_body(body);
        self.decisions.entry(slot).or_default().push(PendingDecision {
            digest,
            cert: cert.clone(),
            from,
        });
        self.try_progress();
    }

    /// Re-evaluate the current slot until nothing changes.
    pub(super) fn try_progress(&mut self) {
        loop {
            let before = self.ledger.len();
            self.step();
            if self.ledger.len() == before {
                break;
            }
        }
    }

    fn step(&mut self) {
        let s = self.ledger.len() + 1;
        if self.try_decide(s) {
            return;
        }
        if self.is_member() {
            self.member_step(s);
        } else if self.external.is_some() {
            self.external_progress();
        }
    }

    /// Commit `s` from a commit quorum or a certified decision, if its body
    /// is known. Asks for the body otherwise.
    pub(super) fn try_decide(&mut self, s: u64) -> bool {
        let q = self.ledger.committee().quorum();
        if let Some((_, d, entries)) = quorum_in(&self.commits, s, None, q) {
            let cert = Arc::new(Certificate::new(CertKind::Commit, entries));
            if self.bodies.contains_key(&d) {
                self.commit_slot(s, d, cert);
                return true;
            }
            let me = self.key.public();
            let signers: Vec<PublicKey> = cert.signers().copied().filter(|pk| *pk != me).collect();
            for pk in signers.into_iter().take(2) {
                self.request_body(d, pk);
            }
        }
        let Some(pending) = self.decisions.remove(&s) else {
            return false;
        };
        let mut keep = Vec::new();
        let crypto = self.crypto.clone();
        for p in pending {
            if !self.bodies.contains_key(&p.digest) {
                self.request_body(p.digest, p.from);
                keep.push(p);
                continue;
            }
            if self.ledger.verify_commit(&p.cert, s, &p.digest, crypto.as_ref()) {
                self.commit_slot(s, p.digest, p.cert);
                return true;
            }
        }
        if !keep.is_empty() {
            self.decisions.insert(s, keep);
        }
        false
    }

    fn candidate(&self, view: ViewTuple, s: u64) -> Option<Digest> {
        if let Some((rv, rs, d)) = self.reproposal {
            if rv == view && rs == s {
                return Some(d);
            }
        }
        if !matches!(self.watermark, Some(w) if s > w) {
            return None;
        }
        let leader = self.view_leader?;
        self.proposals.get(&(view, s))?.get(&leader).copied()
    }

    fn member_step(&mut self, s: u64) {
        let view = self.view;
        if self.vc_sent.contains(&view) {
            return;
        }
        if self.view_leader == Some(self.key.public()) {
            self.leader_step(s);
        }
        if !self.prepared.contains(&(view, s)) {
            if let Some(d) = self.candidate(view, s) {
                if let Some(body) = self.bodies.get(&d).cloned() {
                    self.prepared.insert((view, s));
                    match self.ledger.validate_next(&body, self.crypto.as_ref()) {
                        Ok(()) => {
                            let h = self.sign(Header::Prepare { view, slot: s, digest: d });
                            self.broadcast(Message::Prepare(h));
                        }
                        Err(e) => self.note(Note::Rejected {
                            kind: "proposal",
                            reason: e.to_string(),
                        }),
                    }
                }
            }
        }
        let q = self.ledger.committee().quorum();
        let have = self.accepted.as_ref().is_some_and(|a| a.slot == s && a.view == view);
        if !have {
            if let Some((_, d, entries)) = quorum_in(&self.prepares, s, Some(view), q) {
                self.accepted = Some(Accepted {
                    slot: s,
                    view,
                    digest: d,
                    cert: Arc::new(Certificate::new(CertKind::Accept, entries)),
                });
            }
        }
        let digest = match &self.accepted {
            Some(a) if a.slot == s && a.view == view => a.digest,
            _ => return,
        };
        if self.commit_sent.insert((view, s)) {
            let h = self.sign(Header::Commit { view, slot: s, digest });
            self.broadcast(Message::Commit(h));
        }
    }

    fn leader_step(&mut self, s: u64) {
        if self.pending_summaries.contains_key(&self.view) {
            self.leader_repropose();
            return;
        }
        let view = self.view;
        if !matches!(self.watermark, Some(w) if s > w)
            || self.my_proposals.contains_key(&(view, s))
            || (self.txpool.is_empty() && !self.cfg.propose_empty)
        {
            return;
        }
        let value = self.build_batch();
        self.propose_value(s, Arc::new(value));
    }

    pub(super) fn commit_slot(&mut self, slot: u64, digest: Digest, cert: Arc<Certificate>) {
        let body = self.bodies[&digest].clone();
        let was_member = self.is_member();
        let config = self.ledger.config();
        let old_keys: Vec<PublicKey> = if was_member {
            self.ledger.committee().keys().copied().collect()
        } else {
            Vec::new()
        };
        if let Err(e) = self.ledger.append(slot, body.clone(), cert.clone(), self.crypto.as_ref()) {
            // A certified value that does not apply means more than f faults.
            self.note(Note::Rejected {
                kind: "commit",
                reason: e.to_string(),
            });
            self.commits.retain(|k, _| !(k.0 == slot && k.2 == digest));
            return;
        }
        let view = cert.view().expect("commit certificates are slot-bound");
        self.actions.push(Action::CommitSlot {
            slot,
            digest,
            value: body.clone(),
            view,
            config,
        });
        if was_member && self.notified.insert(slot) {
            let header = self.sign(Header::Notify { view, slot, digest });
            let mut to = old_keys;
            if let SlotValue::Reconfig(ev) = body.as_ref() {
                to.push(ev.new_member);
            }
            if let Some(l) = self.view_leader {
                if !to.contains(&l) {
                    to.push(l);
                }
            }
            self.notify_headers.entry(slot).or_default().push(header.clone());
            self.send(
                to,
                Message::Notify {
                    header: header.clone(),
                    cert: cert.clone(),
                },
            );
            self.actions.push(Action::Propagate {
                msg: Arc::new(Message::Decision {
                    header,
                    cert,
                    body: body.clone(),
                }),
            });
        }
        self.prune_through(slot);
        self.external_on_commit(view);
        if self.ledger.config() != config {
            self.on_config_change(slot, was_member);
        } else if self.is_member() {
            self.start_progress_timer(TimerKind::SlotProgress);
        }
    }

    fn prune_through(&mut self, slot: u64) {
        self.prepares.retain(|k, _| k.0 > slot);
        self.commits.retain(|k, _| k.0 > slot);
        self.proposals.retain(|k, _| k.1 > slot);
        self.my_proposals.retain(|k, _| k.1 > slot);
        self.prepared.retain(|k| k.1 > slot);
        self.commit_sent.retain(|k| k.1 > slot);
        self.decisions.retain(|s, _| *s > slot);
        if self.accepted.as_ref().is_some_and(|a| a.slot <= slot) {
            self.accepted = None;
        }
        // Keep the headers of the latest decision for puzzle building.
        self.notify_headers.retain(|s, _| *s >= slot);
    }

    fn on_config_change(&mut self, slot: u64, was_member: bool) {
        let me = self.key.public();
        let c = self.ledger.config();
        let new_member = self.ledger.committee().newest().public_key;

        self.prepares.clear();
        self.commits.clear();
        self.proposals.clear();
        self.my_proposals.clear();
        self.prepared.clear();
        self.commit_sent.clear();
        self.view_changes.clear();
        self.statuses.clear();
        self.pending_summaries.clear();
        self.pending_reproposals.clear();
        self.reproposal = None;
        self.accepted = None;
        self.vc_sent.clear();
        self.forwarded.clear();
        self.led.clear();
        self.finders.clear();
        self.pow_seen.clear();
        self.max_claim = 0;

        self.view = ViewTuple::new(c, 0, 0);
        self.view_leader = self.leader_key(self.view);
        self.watermark = Some(slot);
        self.grace_until = self.now;

        if let Some(x) = self.external.take() {
            if x.is_active() && new_member != me {
                self.note(Note::Terminated {
                    view: x.view,
                    reason: "another member was admitted",
                });
            }
        }
        if new_member == me {
            self.note(Note::JoinedCommittee { config: c });
        }
        if was_member && !self.is_member() {
            self.note(Note::LeftCommittee { config: c });
            if let Some(old) = self.progress_timer.take() {
                self.timers.remove(&old);
                self.actions.push(Action::CancelTimer { id: old });
            }
        }

        self.puzzle = None;
        self.puzzle_headers.clear();
        for h in self.notify_headers.remove(&slot).unwrap_or_default() {
            self.collect_puzzle_header(&h);
        }

        if self.is_member() {
            self.actions.push(Action::EnterView { view: self.view });
            self.start_progress_timer(TimerKind::SlotProgress);
        }
        let future = std::mem::take(&mut self.future);
        self.loopback.extend(future);
    }

    pub(super) fn collect_puzzle_header(&mut self, h: &SignedHeader) {
        if self.puzzle.is_some() {
            return;
        }
        let c = self.ledger.config();
        let Some((slot, digest)) = self.ledger.creating_decision(c) else {
            return;
        };
        if !matches!(h.header, Header::Notify { slot: s, digest: d, .. } if s == slot && d == digest) {
            return;
        }
        if self.puzzle_headers.contains_key(&h.signer) {
            return;
        }
        self.puzzle_headers.insert(h.signer, h.clone());
        let Some(ctx) = PuzzleContext::from_ledger(&self.ledger, c) else {
            return;
        };
        let need = ctx.deciding.map_or(0, |(w, _, _)| w.f() + 1);
        if self.puzzle_headers.len() < need {
            return;
        }
        let hs: Vec<SignedHeader> = self.puzzle_headers.values().cloned().collect();
        if let Ok(p) = build_puzzle(&ctx, &hs, self.crypto.as_ref()) {
            self.puzzle = Some(p);
            self.note(Note::PuzzleLearned { config: c });
        }
    }
}
