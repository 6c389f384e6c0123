use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::crypto::CryptoProvider;
use crate::message::{Header, SignedHeader};
use crate::types::{CommitteeWindow, Digest, ViewTuple};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertKind {
    /// 2f+1 matching prepares.
    Accept,
    /// 2f+1 matching commits.
    Commit,
    /// 2f+1 matching view-change messages.
    ViewChange,
    /// 2f+1 status headers for one view.
    Status,
}

/// What a certificate vouches for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Binding {
    Slot {
        view: ViewTuple,
        slot: u64,
        digest: Digest,
    },
    View {
        view: ViewTuple,
    },
}

impl CertKind {
    /// Whether `header` is an entry of this kind bound to `binding`.
    pub fn matches(self, header: &Header, binding: &Binding) -> bool {
        match (self, header, binding) {
            (CertKind::Accept, Header::Prepare { view, slot, digest }, Binding::Slot { view: bv, slot: bs, digest: bd })
            | (CertKind::Commit, Header::Commit { view, slot, digest }, Binding::Slot { view: bv, slot: bs, digest: bd }) => {
                view == bv && slot == bs && digest == bd
            }
            (CertKind::ViewChange, Header::ViewChange { view }, Binding::View { view: bv }) => view == bv,
            (CertKind::Status, Header::Status(s), Binding::View { view: bv }) => &s.view == bv,
            _ => false,
        }
    }

    pub fn binding_of(self, header: &Header) -> Option<Binding> {
        let b = match header {
            Header::Prepare { view, slot, digest } | Header::Commit { view, slot, digest } => {
                Binding::Slot {
                    view: *view,
                    slot: *slot,
                    digest: *digest,
                }
            }
            Header::ViewChange { view } => Binding::View { view: *view },
            Header::Status(s) => Binding::View { view: s.view },
            _ => return None,
        };
        self.matches(header, &b).then_some(b)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: CertKind,
    pub entries: Vec<SignedHeader>,
}

impl Certificate {
    pub fn new(kind: CertKind, entries: Vec<SignedHeader>) -> Self {
        Self { kind, entries }
    }

    /// The binding claimed by the first entry. Only meaningful after
    /// [`Certificate::verify`].
    pub fn binding(&self) -> Option<Binding> {
        self.entries
            .first()
            .and_then(|e| self.kind.binding_of(&e.header))
    }

    pub fn view(&self) -> Option<ViewTuple> {
        match self.binding()? {
            Binding::Slot { view, .. } | Binding::View { view } => Some(view),
        }
    }

    pub fn slot(&self) -> Option<u64> {
        match self.binding()? {
            Binding::Slot { slot, .. } => Some(slot),
            Binding::View { .. } => None,
        }
    }

    pub fn digest(&self) -> Option<Digest> {
        match self.binding()? {
            Binding::Slot { digest, .. } => Some(digest),
            Binding::View { .. } => None,
        }
    }

    pub fn signers(&self) -> impl Iterator<Item = &crate::types::PublicKey> + '_ {
        self.entries.iter().map(|e| &e.signer)
    }

    /// Exactly 2f+1 entries from distinct committee members, each matching
    /// `expected` and carrying a valid signature.
    pub fn verify(
        &self,
        expected: &Binding,
        committee: &CommitteeWindow,
        crypto: &dyn CryptoProvider,
    ) -> bool {
        if self.entries.len() != committee.quorum() {
            return false;
        }
        let mut seen = HashSet::with_capacity(self.entries.len());
        self.entries.iter().all(|e| {
            self.kind.matches(&e.header, expected)
                && committee.contains(&e.signer)
                && seen.insert(e.signer)
        }) && self.entries.iter().all(|e| e.verify(crypto))
    }

    /// Verify against whatever the certificate itself claims to bind.
    pub fn verify_self(&self, committee: &CommitteeWindow, crypto: &dyn CryptoProvider) -> bool {
        match self.binding() {
            Some(b) => self.verify(&b, committee, crypto),
            None => false,
        }
    }
}
