//! Value types shared by every participant.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::encoding::{Encode, Encoder};
use crate::error::ProtocolError;
use crate::message::SignedHeader;

macro_rules! hex_bytes {
    ($name:ident, $len:expr) => {
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }

            pub fn short(&self) -> String {
                hex::encode(&self.0[..4])
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.short())
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                let v = hex::decode(&s).map_err(serde::de::Error::custom)?;
                let arr: [u8; $len] = v.try_into().map_err(|_| {
                    serde::de::Error::custom(concat!("wrong length for ", stringify!($name)))
                })?;
                Ok($name(arr))
            }
        }
    };
}

hex_bytes!(PublicKey, 32);
hex_bytes!(Digest, 32);

/// Opaque signature bytes; the length depends on the provider.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Signature(pub Vec<u8>);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", hex::encode(&self.0[..self.0.len().min(4)]))
    }
}

impl Serialize for Signature {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(&s)
            .map(Signature)
            .map_err(serde::de::Error::custom)
    }
}

/// Virtual time in nanoseconds.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Time(pub u64);

impl Time {
    pub const ZERO: Time = Time(0);

    pub fn from_secs_f64(s: f64) -> Time {
        Time((s * 1e9).round() as u64)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn saturating_sub(self, other: Time) -> Time {
        Time(self.0.saturating_sub(other.0))
    }
}

impl std::ops::Add for Time {
    type Output = Time;
    fn add(self, rhs: Time) -> Time {
        Time(self.0 + rhs.0)
    }
}

impl std::ops::Mul<u64> for Time {
    type Output = Time;
    fn mul(self, rhs: u64) -> Time {
        Time(self.0 * rhs)
    }
}

impl fmt::Display for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.as_secs_f64())
    }
}

/// A member identity: public key plus chronological admission number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MemberId {
    pub public_key: PublicKey,
    pub join_index: u64,
}

impl Encode for MemberId {
    fn encode_into(&self, enc: &mut Encoder) {
        enc.raw(&self.public_key.0).u64(self.join_index);
    }
}

/// Leader-regime coordinate. The derived ordering is lexicographic on
/// `(c, e, v)`, which is exactly the leader ranking.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct ViewTuple {
    pub c: u64,
    pub e: u64,
    pub v: u64,
}

impl ViewTuple {
    pub const fn new(c: u64, e: u64, v: u64) -> Self {
        Self { c, e, v }
    }

    pub fn next_view(self) -> Self {
        Self {
            v: self.v + 1,
            ..self
        }
    }

    /// The view whose view-change quorum justifies entering `self`.
    pub fn prev_view(self) -> Option<Self> {
        self.v.checked_sub(1).map(|v| Self { v, ..self })
    }
}

impl fmt::Display for ViewTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.c, self.e, self.v)
    }
}

impl Encode for ViewTuple {
    fn encode_into(&self, enc: &mut Encoder) {
        enc.u64(self.c).u64(self.e).u64(self.v);
    }
}

/// Compare two leader regimes.
pub fn compare_views(a: &ViewTuple, b: &ViewTuple) -> Ordering {
    a.cmp(b)
}

/// The sliding committee `C_i = (M_i, ..., M_{i+n-1})`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CommitteeRaw", into = "CommitteeRaw")]
pub struct CommitteeWindow {
    config: u64,
    members: Vec<MemberId>,
    index: HashMap<PublicKey, usize>,
}

#[derive(Serialize, Deserialize)]
struct CommitteeRaw {
    config: u64,
    members: Vec<MemberId>,
}

impl TryFrom<CommitteeRaw> for CommitteeWindow {
    type Error = ProtocolError;
    fn try_from(raw: CommitteeRaw) -> Result<Self, ProtocolError> {
        CommitteeWindow::new(raw.config, raw.members)
    }
}

impl From<CommitteeWindow> for CommitteeRaw {
    fn from(w: CommitteeWindow) -> Self {
        CommitteeRaw {
            config: w.config,
            members: w.members,
        }
    }
}

impl CommitteeWindow {
    pub fn new(config: u64, members: Vec<MemberId>) -> Result<Self, ProtocolError> {
        let n = members.len();
        if n == 0 || n % 3 != 1 {
            return Err(ProtocolError::CommitteeSize { n });
        }
        if members
            .windows(2)
            .any(|w| w[1].join_index != w[0].join_index + 1)
        {
            return Err(ProtocolError::CommitteeOrder);
        }
        let index: HashMap<_, _> = members
            .iter()
            .enumerate()
            .map(|(i, m)| (m.public_key, i))
            .collect();
        if index.len() != n {
            return Err(ProtocolError::CommitteeOrder);
        }
        Ok(Self {
            config,
            members,
            index,
        })
    }

    /// Genesis committee with join indices `0..n`.
    pub fn genesis(keys: &[PublicKey]) -> Result<Self, ProtocolError> {
        let members = keys
            .iter()
            .enumerate()
            .map(|(i, pk)| MemberId {
                public_key: *pk,
                join_index: i as u64,
            })
            .collect();
        Self::new(1, members)
    }

    pub fn config(&self) -> u64 {
        self.config
    }

    pub fn members(&self) -> &[MemberId] {
        &self.members
    }

    pub fn n(&self) -> usize {
        self.members.len()
    }

    pub fn f(&self) -> usize {
        (self.members.len() - 1) / 3
    }

    pub fn quorum(&self) -> usize {
        2 * self.f() + 1
    }

    pub fn contains(&self, pk: &PublicKey) -> bool {
        self.index.contains_key(pk)
    }

    pub fn position(&self, pk: &PublicKey) -> Option<usize> {
        self.index.get(pk).copied()
    }

    pub fn newest(&self) -> &MemberId {
        self.members.last().expect("committee is never empty")
    }

    pub fn oldest(&self) -> &MemberId {
        &self.members[0]
    }

    pub fn keys(&self) -> impl Iterator<Item = &PublicKey> + '_ {
        self.members.iter().map(|m| &m.public_key)
    }

    /// Drop the oldest member, admit `new_member` as the newest.
    pub fn slide(&self, new_member: PublicKey) -> Result<Self, ProtocolError> {
        let mut members = self.members[1..].to_vec();
        members.push(MemberId {
            public_key: new_member,
            join_index: self.newest().join_index + 1,
        });
        Self::new(self.config + 1, members)
    }
}

impl Encode for CommitteeWindow {
    fn encode_into(&self, enc: &mut Encoder) {
        enc.u64(self.config).u32(self.members.len() as u32);
        for m in &self.members {
            m.encode_into(enc);
        }
    }
}

/// A signed balance transfer between accounts (accounts are public keys).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transaction {
    pub from: PublicKey,
    pub to: PublicKey,
    pub amount: u64,
    pub seq: u64,
    pub sig: Signature,
}

impl Transaction {
    pub fn signing_bytes(from: &PublicKey, to: &PublicKey, amount: u64, seq: u64) -> Vec<u8> {
        let mut enc = Encoder::with_domain(b"solida/tx");
        enc.raw(&from.0).raw(&to.0).u64(amount).u64(seq);
        enc.finish()
    }
}

impl Encode for Transaction {
    fn encode_into(&self, enc: &mut Encoder) {
        enc.raw(&self.from.0)
            .raw(&self.to.0)
            .u64(self.amount)
            .u64(self.seq)
            .bytes(&self.sig.0);
    }
}

/// `puzzle(c)`: `f+1` notify headers for the reconfiguration decision that
/// created configuration `c`. The genesis configuration has an empty puzzle.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Puzzle {
    pub config: u64,
    pub headers: Vec<SignedHeader>,
}

impl Puzzle {
    pub fn genesis() -> Self {
        Self {
            config: 1,
            headers: Vec::new(),
        }
    }
}

impl Encode for Puzzle {
    fn encode_into(&self, enc: &mut Encoder) {
        enc.u64(self.config).u32(self.headers.len() as u32);
        for h in &self.headers {
            h.encode_into(enc);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PowSolution {
    pub pk: PublicKey,
    pub nonce: u64,
    pub puzzle: Puzzle,
}

impl PowSolution {
    /// Digest bound into announcement headers.
    pub fn digest(&self) -> Digest {
        let mut enc = Encoder::with_domain(b"solida/pow");
        self.encode_into(&mut enc);
        crate::crypto::oracle(&enc.finish())
    }
}

impl Encode for PowSolution {
    fn encode_into(&self, enc: &mut Encoder) {
        enc.raw(&self.pk.0).u64(self.nonce);
        self.puzzle.encode_into(enc);
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconfigEvent {
    pub new_member: PublicKey,
    pub pow: PowSolution,
    /// Chained ledger digest of the prefix this event closes.
    pub closing_digest: Digest,
}

/// A ledger entry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SlotValue {
    TxBatch { transactions: Vec<Transaction> },
    Reconfig(ReconfigEvent),
}

impl SlotValue {
    pub fn is_reconfig(&self) -> bool {
        matches!(self, SlotValue::Reconfig(_))
    }

    pub fn as_reconfig(&self) -> Option<&ReconfigEvent> {
        match self {
            SlotValue::Reconfig(ev) => Some(ev),
            SlotValue::TxBatch { .. } => None,
        }
    }

    pub fn empty_batch() -> Self {
        SlotValue::TxBatch {
            transactions: Vec::new(),
        }
    }

    /// `h`: the digest headers refer to.
    pub fn digest(&self) -> Digest {
        let mut enc = Encoder::with_domain(b"solida/value");
        self.encode_into(&mut enc);
        crate::crypto::oracle(&enc.finish())
    }

    pub fn tx_count(&self) -> usize {
        match self {
            SlotValue::TxBatch { transactions } => transactions.len(),
            SlotValue::Reconfig(_) => 0,
        }
    }
}

impl Encode for SlotValue {
    fn encode_into(&self, enc: &mut Encoder) {
        match self {
            SlotValue::TxBatch { transactions } => {
                enc.u8(0).u32(transactions.len() as u32);
                for tx in transactions {
                    tx.encode_into(enc);
                }
            }
            SlotValue::Reconfig(ev) => {
                enc.u8(1).raw(&ev.new_member.0);
                ev.pow.encode_into(enc);
                enc.raw(&ev.closing_digest.0);
            }
        }
    }
}

/// Shared handle to a slot body; bodies are immutable once created.
pub type Body = Arc<SlotValue>;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pk(i: u8) -> PublicKey {
        PublicKey([i; 32])
    }

    #[test]
    fn view_ordering_examples() {
        let v = ViewTuple::new;
        assert_eq!(compare_views(&v(1, 0, 0), &v(1, 0, 0)), Ordering::Equal);
        assert_eq!(compare_views(&v(1, 2, 5), &v(1, 3, 0)), Ordering::Less);
        assert_eq!(compare_views(&v(2, 0, 0), &v(1, 9, 9)), Ordering::Greater);
    }

    proptest! {
        #[test]
        fn view_order_is_total(a in any::<(u8, u8, u8)>(), b in any::<(u8, u8, u8)>(), c in any::<(u8, u8, u8)>()) {
            let mk = |t: (u8, u8, u8)| ViewTuple::new(t.0 as u64, t.1 as u64, t.2 as u64);
            let (a, b, c) = (mk(a), mk(b), mk(c));
            prop_assert_eq!(compare_views(&a, &b), compare_views(&b, &a).reverse());
            if compare_views(&a, &b) != Ordering::Greater && compare_views(&b, &c) != Ordering::Greater {
                prop_assert_ne!(compare_views(&a, &c), Ordering::Greater);
            }
            prop_assert_eq!(compare_views(&a, &b) == Ordering::Equal, a == b);
        }
    }

    #[test]
    fn committee_requires_3f_plus_1() {
        let keys: Vec<_> = (0..6).map(pk).collect();
        assert_eq!(
            CommitteeWindow::genesis(&keys),
            Err(ProtocolError::CommitteeSize { n: 6 })
        );
        let w = CommitteeWindow::genesis(&keys[..4]).unwrap();
        assert_eq!((w.n(), w.f(), w.quorum()), (4, 1, 3));
    }

    #[test]
    fn slide_drops_oldest_and_admits_newest() {
        let keys: Vec<_> = (1..=4).map(pk).collect();
        let w = CommitteeWindow::genesis(&keys).unwrap();
        let w2 = w.slide(pk(5)).unwrap();
        assert!(w2.slide(pk(3)).is_err());
        let got: Vec<_> = w2.keys().copied().collect();
        assert_eq!(got, vec![pk(2), pk(3), pk(4), pk(5)]);
        assert_eq!(w2.newest().join_index, 4);
        assert_eq!(w2.config(), 2);
        assert!(CommitteeWindow::new(2, w2.members().to_vec()).is_ok());
    }

    #[test]
    fn non_consecutive_join_indices_rejected() {
        let members = vec![
            MemberId { public_key: pk(1), join_index: 0 },
            MemberId { public_key: pk(2), join_index: 2 },
            MemberId { public_key: pk(3), join_index: 3 },
            MemberId { public_key: pk(4), join_index: 4 },
        ];
        assert_eq!(
            CommitteeWindow::new(1, members),
            Err(ProtocolError::CommitteeOrder)
        );
    }

    #[test]
    fn hex_newtypes_roundtrip_through_json() {
        let d = Digest([0xab; 32]);
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s, format!("\"{}\"", "ab".repeat(32)));
        let back: Digest = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
        assert!(serde_json::from_str::<Digest>("\"abcd\"").is_err());
    }
}
