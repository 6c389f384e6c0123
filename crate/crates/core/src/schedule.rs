//! Leader schedule.

use crate::crypto::CryptoProvider;
use crate::encoding::Encoder;
use crate::error::ProtocolError;
use crate::types::{CommitteeWindow, Digest, MemberId, PublicKey, ViewTuple};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LeaderRef {
    Member(MemberId),
    /// A PoW finder driving its own admission.
    External(PublicKey),
    /// `(c, e>=1, 0)` without a known PoW finder.
    RequiresPow,
}

impl LeaderRef {
    pub fn key(&self) -> Option<PublicKey> {
        match self {
            LeaderRef::Member(m) => Some(m.public_key),
            LeaderRef::External(pk) => Some(*pk),
            LeaderRef::RequiresPow => None,
        }
    }
}

pub fn lifespan_seed(c: u64, e: u64, crypto: &dyn CryptoProvider) -> Digest {
    let mut enc = Encoder::with_domain(b"solida/leader");
    enc.u64(c).u64(e);
    crypto.oracle(&enc.finish())
}

/// A 256-bit big-endian digest reduced modulo `n`.
pub fn digest_mod(d: &Digest, n: u64) -> u64 {
    d.0.iter()
        .fold(0u128, |acc, &b| (acc * 256 + b as u128) % n as u128) as u64
}

/// Position of `L(c,e,v)` for `v >= 1`: `(H(c,e) + v) mod n`.
pub fn round_robin_position(view: ViewTuple, n: usize, crypto: &dyn CryptoProvider) -> usize {
    let n = n as u64;
    let base = digest_mod(&lifespan_seed(view.c, view.e, crypto), n);
    ((base + view.v % n) % n) as usize
}

pub fn leader_of(
    view: ViewTuple,
    committee: &CommitteeWindow,
    pow_finder: Option<PublicKey>,
    crypto: &dyn CryptoProvider,
) -> Result<LeaderRef, ProtocolError> {
    if view.c != committee.config() {
        return Err(ProtocolError::ConfigMismatch {
            view: view.c,
            committee: committee.config(),
        });
    }
    Ok(match (view.e, view.v) {
        (_, v) if v >= 1 => {
            LeaderRef::Member(committee.members()[round_robin_position(view, committee.n(), crypto)])
        }
        // The genesis configuration has no admitted newcomer; its first
        // listed member leads.
        (0, _) if view.c == 1 => LeaderRef::Member(*committee.oldest()),
        (0, _) => LeaderRef::Member(*committee.newest()),
        _ => match pow_finder {
            Some(pk) => LeaderRef::External(pk),
            None => LeaderRef::RequiresPow,
        },
    })
}
