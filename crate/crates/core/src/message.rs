//! Signed headers and wire messages.
//!
//! Bodies (slot values) travel beside headers; every header carries only the
//! digest `h` of the value it refers to.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::certificate::Certificate;
use crate::crypto::{CryptoProvider, Keypair};
use crate::encoding::{Encode, Encoder};
use crate::types::{Body, Digest, PowSolution, PublicKey, Signature, SlotValue, ViewTuple};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StatusHeader {
    pub view: ViewTuple,
    /// Last committed slot `s-1` (0 before any commit).
    pub last_slot: u64,
    pub last_digest: Digest,
    /// Chained ledger digest after `last_slot`.
    pub last_chain: Digest,
    /// The slot being worked on, `s`.
    pub slot: u64,
    /// Rank and digest of the value accepted for `slot`, if any.
    pub accepted: Option<(ViewTuple, Digest)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Header {
    Propose { view: ViewTuple, slot: u64, digest: Digest },
    Prepare { view: ViewTuple, slot: u64, digest: Digest },
    Commit { view: ViewTuple, slot: u64, digest: Digest },
    Notify { view: ViewTuple, slot: u64, digest: Digest },
    ViewChange { view: ViewTuple },
    NewView { view: ViewTuple },
    Status(StatusHeader),
    Repropose { view: ViewTuple, slot: u64, digest: Digest },
    PowAnnounce { config: u64, claim: u64, pow: Digest },
}

impl Header {
    pub fn view(&self) -> Option<ViewTuple> {
        match self {
            Header::Propose { view, .. }
            | Header::Prepare { view, .. }
            | Header::Commit { view, .. }
            | Header::Notify { view, .. }
            | Header::ViewChange { view }
            | Header::NewView { view }
            | Header::Repropose { view, .. } => Some(*view),
            Header::Status(s) => Some(s.view),
            Header::PowAnnounce { .. } => None,
        }
    }

    /// `(view, slot, digest)` for slot-bound headers.
    pub fn slot_binding(&self) -> Option<(ViewTuple, u64, Digest)> {
        match self {
            Header::Propose { view, slot, digest }
            | Header::Prepare { view, slot, digest }
            | Header::Commit { view, slot, digest }
            | Header::Notify { view, slot, digest }
            | Header::Repropose { view, slot, digest } => Some((*view, *slot, *digest)),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Header::Propose { .. } => "propose",
            Header::Prepare { .. } => "prepare",
            Header::Commit { .. } => "commit",
            Header::Notify { .. } => "notify",
            Header::ViewChange { .. } => "view_change",
            Header::NewView { .. } => "new_view",
            Header::Status(_) => "status",
            Header::Repropose { .. } => "repropose",
            Header::PowAnnounce { .. } => "pow_announce",
        }
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::with_domain(b"solida/header");
        self.encode_into(&mut enc);
        enc.finish()
    }
}

fn slot_fields(enc: &mut Encoder, tag: u8, view: &ViewTuple, slot: u64, digest: &Digest) {
    enc.u8(tag);
    view.encode_into(enc);
    enc.u64(slot).raw(&digest.0);
}

impl Encode for Header {
    fn encode_into(&self, enc: &mut Encoder) {
        match self {
            Header::Propose { view, slot, digest } => slot_fields(enc, 1, view, *slot, digest),
            Header::Prepare { view, slot, digest } => slot_fields(enc, 2, view, *slot, digest),
            Header::Commit { view, slot, digest } => slot_fields(enc, 3, view, *slot, digest),
            Header::Notify { view, slot, digest } => slot_fields(enc, 4, view, *slot, digest),
            Header::ViewChange { view } => {
                enc.u8(5);
                view.encode_into(enc);
            }
            Header::NewView { view } => {
                enc.u8(6);
                view.encode_into(enc);
            }
            Header::Status(s) => {
                enc.u8(7);
                s.view.encode_into(enc);
                enc.u64(s.last_slot)
                    .raw(&s.last_digest.0)
                    .raw(&s.last_chain.0)
                    .u64(s.slot);
                match &s.accepted {
                    None => {
                        enc.bool(false);
                    }
                    Some((v, d)) => {
                        enc.bool(true);
                        v.encode_into(enc);
                        enc.raw(&d.0);
                    }
                }
            }
            Header::Repropose { view, slot, digest } => slot_fields(enc, 8, view, *slot, digest),
            Header::PowAnnounce { config, claim, pow } => {
                enc.u8(9).u64(*config).u64(*claim).raw(&pow.0);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignedHeader {
    pub header: Header,
    pub signer: PublicKey,
    pub sig: Signature,
}

impl SignedHeader {
    pub fn sign(header: Header, key: &Keypair, crypto: &dyn CryptoProvider) -> Self {
        let sig = crypto.sign(key, &header.signing_bytes());
        Self {
            header,
            signer: key.public(),
            sig,
        }
    }

    pub fn verify(&self, crypto: &dyn CryptoProvider) -> bool {
        crypto.verify(&self.signer, &self.header.signing_bytes(), &self.sig)
    }
}

impl Encode for SignedHeader {
    fn encode_into(&self, enc: &mut Encoder) {
        self.header.encode_into(enc);
        enc.raw(&self.signer.0).bytes(&self.sig.0);
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StatusMsg {
    pub header: SignedHeader,
    /// Commit certificate for `last_slot`; absent for the genesis slot 0.
    pub commit_cert: Option<Arc<Certificate>>,
    pub committed_body: Option<Body>,
    pub accept_cert: Option<Arc<Certificate>>,
    pub accepted_body: Option<Body>,
}

impl StatusMsg {
    pub fn status(&self) -> &StatusHeader {
        match &self.header.header {
            Header::Status(s) => s,
            _ => unreachable!("status message built around a non-status header"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReproposeMsg {
    pub header: SignedHeader,
    pub body: Body,
    /// Status certificate `S`: the 2f+1 status headers.
    pub statuses: Vec<SignedHeader>,
    /// `C*`, absent when `s* = 0`.
    pub commit_cert: Option<Arc<Certificate>>,
    pub committed_body: Option<Body>,
    /// `A*`.
    pub accept_cert: Option<Arc<Certificate>>,
}

impl ReproposeMsg {
    pub fn binding(&self) -> (ViewTuple, u64, Digest) {
        self.header
            .header
            .slot_binding()
            .expect("repropose header is slot-bound")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    Propose {
        header: SignedHeader,
        body: Body,
    },
    Prepare(SignedHeader),
    Commit(SignedHeader),
    /// Member-to-member notification of a decision.
    Notify {
        header: SignedHeader,
        cert: Arc<Certificate>,
    },
    /// A decision propagated to the wider network (miners, users).
    Decision {
        header: SignedHeader,
        cert: Arc<Certificate>,
        body: Body,
    },
    ViewChange(SignedHeader),
    /// A view-change quorum forwarded to the next leader.
    ForwardVc {
        cert: Arc<Certificate>,
    },
    NewView {
        header: SignedHeader,
        cert: Arc<Certificate>,
    },
    Status(Arc<StatusMsg>),
    Repropose(Arc<ReproposeMsg>),
    PowAnnounce {
        header: SignedHeader,
        solution: Arc<PowSolution>,
    },
    /// An external leader revealing a commit certificate before terminating.
    Reveal {
        cert: Arc<Certificate>,
        body: Body,
    },
    BodyRequest {
        digest: Digest,
    },
    BodyResponse {
        body: Body,
    },
}

impl Message {
    pub fn name(&self) -> &'static str {
        match self {
            Message::Propose { .. } => "propose",
            Message::Prepare(_) => "prepare",
            Message::Commit(_) => "commit",
            Message::Notify { .. } => "notify",
            Message::Decision { .. } => "decision",
            Message::ViewChange(_) => "view_change",
            Message::ForwardVc { .. } => "forward_vc",
            Message::NewView { .. } => "new_view",
            Message::Status(_) => "status",
            Message::Repropose(_) => "repropose",
            Message::PowAnnounce { .. } => "pow_announce",
            Message::Reveal { .. } => "reveal",
            Message::BodyRequest { .. } => "body_request",
            Message::BodyResponse { .. } => "body_response",
        }
    }

    /// The primary signed header, if the message has one.
    pub fn header(&self) -> Option<&SignedHeader> {
        match self {
            Message::Propose { header, .. }
            | Message::Notify { header, .. }
            | Message::Decision { header, .. }
            | Message::NewView { header, .. }
            | Message::PowAnnounce { header, .. } => Some(header),
            Message::Prepare(h) | Message::Commit(h) | Message::ViewChange(h) => Some(h),
            Message::Status(s) => Some(&s.header),
            Message::Repropose(r) => Some(&r.header),
            Message::ForwardVc { .. }
            | Message::Reveal { .. }
            | Message::BodyRequest { .. }
            | Message::BodyResponse { .. } => None,
        }
    }

    pub fn view(&self) -> Option<ViewTuple> {
        match self {
            Message::ForwardVc { cert } => cert.view(),
            Message::Reveal { cert, .. } => cert.view(),
            _ => self.header().and_then(|h| h.header.view()),
        }
    }

    pub fn slot(&self) -> Option<u64> {
        match self {
            Message::Status(s) => Some(s.status().slot),
            Message::Reveal { cert, .. } => cert.slot(),
            _ => self
                .header()
                .and_then(|h| h.header.slot_binding())
                .map(|b| b.1),
        }
    }

    pub fn digest(&self) -> Option<Digest> {
        match self {
            Message::BodyRequest { digest } => Some(*digest),
            Message::BodyResponse { body } => Some(body.digest()),
            Message::Reveal { body, .. } => Some(body.digest()),
            _ => self
                .header()
                .and_then(|h| h.header.slot_binding())
                .map(|b| b.2),
        }
    }

    /// Every body carried by the message.
    pub fn bodies(&self) -> Vec<&SlotValue> {
        match self {
            Message::Propose { body, .. }
            | Message::Decision { body, .. }
            | Message::Reveal { body, .. }
            | Message::BodyResponse { body } => vec![body.as_ref()],
            Message::Status(s) => s
                .committed_body
                .iter()
                .chain(s.accepted_body.iter())
                .map(|b| b.as_ref())
                .collect(),
            Message::Repropose(r) => std::iter::once(&r.body)
                .chain(r.committed_body.iter())
                .map(|b| b.as_ref())
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Every signed header in the message, including certificate entries and
    /// embedded puzzles. Used by the size model and the forgery guard.
    pub fn all_headers(&self) -> Vec<&SignedHeader> {
        let mut out: Vec<&SignedHeader> = self.header().into_iter().collect();
        match self {
            Message::Notify { cert: c, .. }
            | Message::Decision { cert: c, .. }
            | Message::NewView { cert: c, .. }
            | Message::ForwardVc { cert: c }
            | Message::Reveal { cert: c, .. } => out.extend(c.entries.iter()),
            Message::Status(s) => {
                for c in s.commit_cert.iter().chain(&s.accept_cert) {
                    out.extend(c.entries.iter());
                }
            }
            Message::Repropose(r) => {
                out.extend(r.statuses.iter());
                for c in r.commit_cert.iter().chain(&r.accept_cert) {
                    out.extend(c.entries.iter());
                }
            }
            Message::PowAnnounce { solution, .. } => out.extend(solution.puzzle.headers.iter()),
            _ => {}
        }
        for b in self.bodies() {
            if let SlotValue::Reconfig(ev) = b {
                out.extend(ev.pow.puzzle.headers.iter());
            }
        }
        out
    }
}
