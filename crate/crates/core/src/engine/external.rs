//! PoW announcements and the external leader driving its own admission.

use std::sync::Arc;

use serde::Serialize;

use super::{Action, Note, Replica};
use crate::ledger::chain_digest;
use crate::message::{Header, Message, SignedHeader};
use crate::reconfig::{decide_reconfig_action, verify_pow, ReconfigCase};
use crate::status::StatusSummary;
use crate::types::{PowSolution, ReconfigEvent, SlotValue, Time, ViewTuple};

#[derive(Clone, Debug, Serialize)]
pub struct ExternalLeader {
    #[serde(skip)]
    pub solution: Arc<PowSolution>,
    /// `(c, claim, 0)`.
    pub view: ViewTuple,
    pub announced_at: Time,
    pub case: Option<ReconfigCase>,
    pub terminated: Option<&'static str>,
    #[serde(skip)]
    summary: Option<StatusSummary>,
    acted: bool,
}

impl ExternalLeader {
    pub fn is_active(&self) -> bool {
        self.terminated.is_none()
    }

    pub fn has_summary(&self) -> bool {
        self.summary.is_some()
    }

    pub fn has_acted(&self) -> bool {
        self.acted
    }
}

impl Replica {
    pub(super) fn on_pow_found(&mut self, sol: PowSolution) {
        let me = self.key.public();
        let c = self.ledger.config();
        let reject = |reason: &str| Note::Rejected {
            kind: "pow",
            reason: reason.into(),
        };
        if self.is_member() || sol.pk != me || self.ledger.is_admitted(&me) {
            self.note(reject("finder cannot join"));
            return;
        }
        if self.external.as_ref().is_some_and(|x| x.is_active()) {
            return;
        }
        if sol.puzzle.config != c || !verify_pow(&sol, c, &self.ledger, self.crypto.as_ref()) {
            self.note(reject("stale or invalid solution"));
            return;
        }
        let claim = self.max_claim + 1;
        let view = ViewTuple::new(c, claim, 0);
        let header = self.sign(Header::PowAnnounce {
            config: c,
            claim,
            pow: sol.digest(),
        });
        self.max_claim = claim;
        self.finders.insert(claim, me);
        self.pow_seen.insert((me, sol.nonce));
        let solution = Arc::new(sol);
        self.external = Some(ExternalLeader {
            solution: solution.clone(),
            view,
            announced_at: self.now,
            case: None,
            terminated: None,
            summary: None,
            acted: false,
        });
        let msg = Message::PowAnnounce { header, solution };
        self.actions.push(Action::Propagate {
            msg: Arc::new(msg.clone()),
        });
        self.broadcast(msg);
    }

    pub(super) fn on_pow_announce(&mut self, raw: &Arc<Message>, header: &SignedHeader, sol: &Arc<PowSolution>) {
        let Header::PowAnnounce { config, claim, pow } = header.header else {
            return;
        };
        let c = self.ledger.config();
        if config < c {
            return;
        }
        if config > c {
            if self.future.len() < super::FUTURE_CAP {
                self.future.push((header.signer, raw.clone()));
            }
            return;
        }
        if !self.pow_seen.insert((sol.pk, sol.nonce)) {
            return;
        }
        if claim == 0
            || header.signer != sol.pk
            || pow != sol.digest()
            || !header.verify(self.crypto.as_ref())
            || !verify_pow(sol, c, &self.ledger, self.crypto.as_ref())
        {
            return;
        }
        self.max_claim = self.max_claim.max(claim);
        let finder = *self.finders.entry(claim).or_insert(sol.pk);
        if let Some(x) = &self.external {
            if x.is_active() && claim > x.view.e {
                self.terminate_external("a higher lifespan was claimed");
            }
        }
        if !self.is_member() {
            return;
        }
        let me = self.key.public();
        let to: Vec<_> = self
            .ledger
            .committee()
            .keys()
            .copied()
            .filter(|pk| *pk != me && *pk != header.signer)
            .collect();
        if !to.is_empty() {
            self.actions.push(Action::Send { to, msg: raw.clone() });
        }
        self.actions.push(Action::Propagate { msg: raw.clone() });
        if claim > self.view.e && finder == sol.pk {
            self.enter_view(ViewTuple::new(c, claim, 0));
        }
    }

    pub(super) fn terminate_external(&mut self, reason: &'static str) {
        if let Some(x) = &mut self.external {
            if x.terminated.is_none() {
                x.terminated = Some(reason);
                let view = x.view;
                self.note(Note::Terminated { view, reason });
            }
        }
    }

    pub(super) fn external_on_summary(&mut self, sum: StatusSummary) {
        let case = match decide_reconfig_action(&sum) {
            Ok(case) => case,
            Err(e) => {
                self.note(Note::Rejected {
                    kind: "status",
                    reason: e.to_string(),
                });
                return;
            }
        };
        let Some(x) = &mut self.external else {
            return;
        };
        x.case = Some(case);
        x.summary = Some(sum.clone());
        let view = x.view;
        self.note(Note::ExternalCase {
            view,
            case,
            s_star: sum.s_star,
        });
        self.try_progress();
    }

    /// Act on the case split once the local ledger reaches `s*`.
    pub(super) fn external_progress(&mut self) {
        let Some(x) = &self.external else {
            return;
        };
        if !x.is_active() || x.acted {
            return;
        }
        let (Some(sum), Some(case)) = (x.summary.clone(), x.case) else {
            return;
        };
        let solution = x.solution.clone();
        if case == ReconfigCase::Terminate {
            if let (Some(cert), Some(body)) = (sum.commit_cert.clone(), sum.committed_body.clone()) {
                self.broadcast(Message::Reveal { cert, body });
            }
            self.mark_acted();
            self.terminate_external("the configuration was already closed");
            return;
        }
        if !self.reach_s_star(&sum) {
            return;
        }
        self.mark_acted();
        let me = self.key.public();
        let s = sum.s_star;
        let chain_s = self.ledger.chain_at(s).unwrap_or(sum.chain_star);
        let event = |closing_digest| {
            Arc::new(SlotValue::Reconfig(ReconfigEvent {
                new_member: me,
                pow: (*solution).clone(),
                closing_digest,
            }))
        };
        match case {
            ReconfigCase::Terminate => unreachable!(),
            ReconfigCase::ReproposeAndTerminate => {
                let body = sum.accepted_body.clone().expect("checked by the case split");
                let msg = self.build_repropose(&sum, body);
                self.broadcast(Message::Repropose(Arc::new(msg)));
                self.terminate_external("a rival reconfiguration was accepted");
            }
            ReconfigCase::ProposeReconfig => {
                let msg = self.build_repropose(&sum, event(chain_s));
                self.broadcast(Message::Repropose(Arc::new(msg)));
            }
            ReconfigCase::ReproposeThenReconfig => {
                let body = sum.accepted_body.clone().expect("checked by the case split");
                let closing = chain_digest(&chain_s, s + 1, &body.digest());
                let msg = self.build_repropose(&sum, body);
                self.broadcast(Message::Repropose(Arc::new(msg)));
                self.propose_value(s + 2, event(closing));
            }
        }
    }

    fn mark_acted(&mut self) {
        if let Some(x) = &mut self.external {
            x.acted = true;
        }
    }

    /// A commit certified in a later view of our configuration means the
    /// lifespan we lead is over.
    pub(super) fn external_on_commit(&mut self, view: ViewTuple) {
        let lost = self
            .external
            .as_ref()
            .is_some_and(|x| x.is_active() && view.c == x.view.c && view > x.view);
        if lost {
            self.terminate_external("a later view made progress");
        }
    }
}
