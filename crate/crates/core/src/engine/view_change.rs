//! View changes, status collection and re-proposals.

use std::sync::Arc;

use super::{Guard, Note, PendingDecision, Replica, TimerKind};
use crate::certificate::{Binding, CertKind, Certificate};
use crate::message::{Header, Message, ReproposeMsg, SignedHeader, StatusHeader, StatusMsg};
use crate::status::{summarize_status, verify_repropose, StatusSummary};
use crate::types::{Body, ViewTuple};

const PENDING_REPROPOSALS: usize = 4;

impl Replica {
    pub(super) fn send_view_change(&mut self, view: ViewTuple) {
        if !self.vc_sent.insert(view) {
            return;
        }
        self.note(Note::ViewChangeSent { view });
        let h = self.sign(Header::ViewChange { view });
        self.broadcast(Message::ViewChange(h));
    }

    pub(super) fn on_view_change(&mut self, h: &SignedHeader) {
        let Header::ViewChange { view } = h.header else {
            return;
        };
        if !self.is_member() || view.c != self.ledger.config() || view < self.view {
            return;
        }
        let q = self.ledger.committee().quorum();
        if let Some(m) = self.view_changes.get(&view) {
            if m.len() >= q || m.contains_key(&h.signer) {
                return;
            }
        }
        if !self.is_committee_signer(h) {
            return;
        }
        let m = self.view_changes.entry(view).or_default();
        m.insert(h.signer, h.clone());
        if m.len() == q {
            self.on_vc_quorum(view);
        }
    }

    fn on_vc_quorum(&mut self, view: ViewTuple) {
        let target = view.next_view();
        if self.view >= target || !self.forwarded.insert(view) {
            return;
        }
        let entries = self.view_changes[&view].values().cloned().collect();
        let cert = Arc::new(Certificate::new(CertKind::ViewChange, entries));
        let Some(leader) = self.member_leader(target) else {
            return;
        };
        if leader == self.key.public() {
            self.become_leader(target, cert);
        } else {
            self.send(vec![leader], Message::ForwardVc { cert });
            self.start_timer(TimerKind::NewViewWait, self.cfg.delta * 2, Guard::NewViewWait { target });
        }
    }

    pub(super) fn on_forward_vc(&mut self, cert: &Arc<Certificate>) {
        let Some(Binding::View { view }) = cert.binding() else {
            return;
        };
        let target = view.next_view();
        if cert.kind != CertKind::ViewChange
            || !self.is_member()
            || view.c != self.ledger.config()
            || self.view >= target
            || self.led.contains(&target)
            || self.member_leader(target) != Some(self.key.public())
        {
            return;
        }
        if !cert.verify(&Binding::View { view }, self.ledger.committee(), self.crypto.as_ref()) {
            return;
        }
        self.become_leader(target, cert.clone());
    }

    fn become_leader(&mut self, target: ViewTuple, cert: Arc<Certificate>) {
        if !self.led.insert(target) {
            return;
        }
        let header = self.sign(Header::NewView { view: target });
        self.broadcast(Message::NewView { header, cert });
    }

    pub(super) fn on_new_view(&mut self, header: &SignedHeader, cert: &Arc<Certificate>) {
        let Header::NewView { view } = header.header else {
            return;
        };
        let Some(prev) = view.prev_view() else {
            return;
        };
        if !self.is_member()
            || view.c != self.ledger.config()
            || view <= self.view
            || view.v == 0
            || self.member_leader(view) != Some(header.signer)
            || !header.verify(self.crypto.as_ref())
        {
            return;
        }
        if cert.kind != CertKind::ViewChange
            || !cert.verify(&Binding::View { view: prev }, self.ledger.committee(), self.crypto.as_ref())
        {
            return;
        }
        self.enter_view(view);
    }

    /// Move to `view`, report status to its leader and start the grace timer.
    pub(super) fn enter_view(&mut self, view: ViewTuple) {
        self.view = view;
        self.view_leader = self.leader_key(view);
        self.watermark = None;
        self.reproposal = None;
        self.actions.push(super::Action::EnterView { view });
        self.view_changes.retain(|v, _| *v >= view);
        self.statuses.retain(|v, _| *v >= view);
        self.pending_summaries.retain(|v, _| *v >= view);
        self.pending_reproposals.retain(|v, _| *v >= view);
        self.start_progress_timer(TimerKind::LeaderGrace);
        if let Some(leader) = self.view_leader {
            let status = self.make_status(view);
            self.send(vec![leader], Message::Status(Arc::new(status)));
        }
        if let Some(rs) = self.pending_reproposals.remove(&view) {
            for r in rs {
                self.loopback.push_back((r.header.signer, Arc::new(Message::Repropose(r))));
            }
        }
        self.try_progress();
    }

    /// This replica's status report for `view`.
    pub fn make_status(&self, view: ViewTuple) -> StatusMsg {
        let len = self.ledger.len();
        let acc = self.accepted.as_ref().filter(|a| a.slot == len + 1);
        let header = StatusHeader {
            view,
            last_slot: len,
            last_digest: self.ledger.digest_at(len).expect("head digest"),
            last_chain: self.ledger.head_chain(),
            slot: len + 1,
            accepted: acc.map(|a| (a.view, a.digest)),
        };
        let entry = self.ledger.entry(len);
        StatusMsg {
            header: self.sign(Header::Status(header)),
            commit_cert: entry.map(|e| e.cert.clone()),
            committed_body: entry.map(|e| e.value.clone()),
            accept_cert: acc.map(|a| a.cert.clone()),
            accepted_body: acc.and_then(|a| self.bodies.get(&a.digest).cloned()),
        }
    }

    fn collecting_statuses(&self, view: ViewTuple) -> bool {
        let me = self.key.public();
        let internal = self.is_member() && self.view == view && self.view_leader == Some(me);
        let external = self
            .external
            .as_ref()
            .is_some_and(|x| x.is_active() && x.view == view && !x.has_summary());
        internal || external
    }

    fn valid_status(&self, m: &StatusMsg) -> bool {
        let crypto = self.crypto.as_ref();
        let committee = self.ledger.committee();
        let Header::Status(s) = &m.header.header else {
            return false;
        };
        if !committee.contains(&m.header.signer) || s.slot != s.last_slot + 1 {
            return false;
        }
        if s.last_slot == 0 {
            if Some(s.last_digest) != self.ledger.digest_at(0) {
                return false;
            }
        } else {
            let (Some(cert), Some(body)) = (&m.commit_cert, &m.committed_body) else {
                return false;
            };
            if body.digest() != s.last_digest
                || !self.ledger.verify_commit(cert, s.last_slot, &s.last_digest, crypto)
            {
                return false;
            }
        }
        if let Some(chain) = self.ledger.chain_at(s.last_slot) {
            if chain != s.last_chain {
                return false;
            }
        }
        if let Some((rank, d)) = s.accepted {
            let Some(a) = &m.accept_cert else {
                return false;
            };
            let binding = Binding::Slot {
                view: rank,
                slot: s.slot,
                digest: d,
            };
            if a.kind != CertKind::Accept || !a.verify(&binding, committee, crypto) {
                return false;
            }
            if m.accepted_body.as_ref().is_some_and(|b| b.digest() != d) {
                return false;
            }
        }
        m.header.verify(crypto)
    }

    pub(super) fn on_status(&mut self, m: &Arc<StatusMsg>) {
        let view = m.status().view;
        if view.c != self.ledger.config() || !self.collecting_statuses(view) {
            return;
        }
        let q = self.ledger.committee().quorum();
        if let Some(list) = self.statuses.get(&view) {
            if list.len() >= q || list.iter().any(|x| x.header.signer == m.header.signer) {
                return;
            }
        }
        if !self.valid_status(m) {
            self.note(Note::Rejected {
                kind: "status",
                reason: "invalid status report".into(),
            });
            return;
        }
        let list = self.statuses.entry(view).or_default();
        list.push(m.clone());
        if list.len() < q {
            return;
        }
        let list = list.clone();
        match summarize_status(view, &list) {
            Ok(sum) if self.external.as_ref().is_some_and(|x| x.view == view) => {
                self.external_on_summary(sum);
            }
            Ok(sum) => {
                self.pending_summaries.insert(view, sum);
                self.try_progress();
            }
            Err(e) => self.note(Note::Rejected {
                kind: "status",
                reason: e.to_string(),
            }),
        }
    }

    pub(super) fn build_repropose(&mut self, sum: &StatusSummary, body: Body) -> ReproposeMsg {
        self.store_body(&body);
        let header = self.sign(Header::Repropose {
            view: sum.view,
            slot: sum.s_star + 1,
            digest: body.digest(),
        });
        ReproposeMsg {
            header,
            body,
            statuses: sum.statuses.clone(),
            commit_cert: sum.commit_cert.clone(),
            committed_body: sum.committed_body.clone(),
            accept_cert: sum.accept_cert.clone(),
        }
    }

    /// Catch up to `s*` through `C*` when exactly one slot behind. Returns
    /// whether the ledger already reaches `s*`.
    pub(super) fn reach_s_star(&mut self, sum: &StatusSummary) -> bool {
        let len = self.ledger.len();
        if len >= sum.s_star {
            return true;
        }
        if len + 1 == sum.s_star {
            if let (Some(cert), Some(body)) = (&sum.commit_cert, &sum.committed_body) {
                self.store_body(body);
                let from = sum.statuses[0].signer;
                self.decisions.entry(sum.s_star).or_default().push(PendingDecision {
                    digest: sum.h_star,
                    cert: cert.clone(),
                    from,
                });
                // Apply it now: the caller's progress loop only repeats when
                // the ledger grows.
                return self.try_decide(sum.s_star) && self.ledger.len() >= sum.s_star;
            }
        }
        false
    }

    /// Internal leader after a view change: re-propose into `s*+1`.
    pub(super) fn leader_repropose(&mut self) {
        let view = self.view;
        let Some(sum) = self.pending_summaries.get(&view).cloned() else {
            return;
        };
        if !self.reach_s_star(&sum) {
            return;
        }
        self.pending_summaries.remove(&view);
        let slot = sum.s_star + 1;
        let body: Body = match (&sum.h_prime, &sum.accepted_body) {
            (Some(_), Some(b)) => b.clone(),
            (Some(_), None) => {
                self.note(Note::Rejected {
                    kind: "status",
                    reason: "accepted value body unavailable".into(),
                });
                return;
            }
            (None, _) => match self.ledger.entry(slot) {
                Some(e) => e.value.clone(),
                None => Arc::new(self.build_batch()),
            },
        };
        let msg = self.build_repropose(&sum, body);
        self.my_proposals.insert((view, slot), msg.body.digest());
        self.broadcast(Message::Repropose(Arc::new(msg)));
    }

    pub(super) fn on_repropose(&mut self, r: &Arc<ReproposeMsg>) {
        let (view, slot, digest) = r.binding();
        if !self.is_member() || view.c != self.ledger.config() || view < self.view {
            return;
        }
        if view > self.view {
            let q = self.pending_reproposals.entry(view).or_default();
            if q.len() < PENDING_REPROPOSALS {
                q.push(r.clone());
            }
            return;
        }
        if Some(r.header.signer) != self.view_leader
            || self.reproposal.is_some_and(|(v, ..)| v == view)
            || self.vc_sent.contains(&view)
            || !r.header.verify(self.crypto.as_ref())
        {
            return;
        }
        let proof = match verify_repropose(r, self.ledger.committee(), &self.ledger, self.crypto.as_ref()) {
            Ok(p) => p,
            Err(e) => {
                self.note(Note::Rejected {
                    kind: "repropose",
                    reason: e.to_string(),
                });
                return;
            }
        };
        if self.ledger.len() + 1 == proof.s_star {
            if let (Some(cert), Some(body)) = (&r.commit_cert, &r.committed_body) {
                self.store_body(body);
                self.decisions.entry(proof.s_star).or_default().push(PendingDecision {
                    digest: proof.h_star,
                    cert: cert.clone(),
                    from: r.header.signer,
                });
            }
        }
        self.store_body(&r.body);
        self.reproposal = Some((view, slot, digest));
        self.watermark = Some(slot);
        self.try_progress();
    }
}
