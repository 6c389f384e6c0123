//! The replicated ledger, account state and committee history.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::certificate::{Binding, CertKind, Certificate};
use crate::crypto::{oracle, CryptoProvider, Threshold};
use crate::encoding::Encoder;
use crate::error::ProtocolError;
use crate::reconfig;
use crate::types::{Body, CommitteeWindow, Digest, PublicKey, SlotValue, Transaction, ViewTuple};

/// Chain parameters fixed at genesis.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Genesis {
    /// First committee in join order; the first entry leads view (1,0,0).
    pub committee: Vec<PublicKey>,
    pub balances: Vec<(PublicKey, u64)>,
    pub threshold: Threshold,
}

impl Genesis {
    pub fn digest(&self) -> Digest {
        let mut enc = Encoder::with_domain(b"solida/genesis");
        enc.u32(self.committee.len() as u32);
        for pk in &self.committee {
            enc.raw(&pk.0);
        }
        enc.u32(self.balances.len() as u32);
        for (pk, b) in &self.balances {
            enc.raw(&pk.0).u64(*b);
        }
        enc.raw(&self.threshold.0 .0);
        oracle(&enc.finish())
    }
}

/// Flat balances with per-account sequence numbers.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountState {
    balances: BTreeMap<PublicKey, u64>,
    next_seq: BTreeMap<PublicKey, u64>,
}

impl AccountState {
    pub fn from_genesis(g: &Genesis) -> Self {
        let mut s = Self::default();
        for (pk, b) in &g.balances {
            *s.balances.entry(*pk).or_default() += b;
        }
        s
    }

    pub fn balance(&self, pk: &PublicKey) -> u64 {
        self.balances.get(pk).copied().unwrap_or(0)
    }

    pub fn next_seq(&self, pk: &PublicKey) -> u64 {
        self.next_seq.get(pk).copied().unwrap_or(0)
    }

    pub fn check(&self, tx: &Transaction, crypto: &dyn CryptoProvider) -> Result<(), &'static str> {
        if tx.amount == 0 {
            return Err("zero amount");
        }
        if tx.seq != self.next_seq(&tx.from) {
            return Err("bad sequence number");
        }
        if self.balance(&tx.from) < tx.amount {
            return Err("insufficient balance");
        }
        let msg = Transaction::signing_bytes(&tx.from, &tx.to, tx.amount, tx.seq);
        if !crypto.verify(&tx.from, &msg, &tx.sig) {
            return Err("bad signature");
        }
        Ok(())
    }

    /// Check and apply a single transaction.
    pub fn apply(&mut self, tx: &Transaction, crypto: &dyn CryptoProvider) -> Result<(), &'static str> {
        self.check(tx, crypto)?;
        self.apply_unchecked(tx);
        Ok(())
    }

    /// Apply without checks; callers validate first.
    fn apply_unchecked(&mut self, tx: &Transaction) {
        *self.balances.entry(tx.from).or_default() -= tx.amount;
        *self.balances.entry(tx.to).or_default() += tx.amount;
        *self.next_seq.entry(tx.from).or_default() += 1;
    }

    /// Validate a batch in order; returns the resulting state.
    pub fn apply_batch(
        &self,
        txs: &[Transaction],
        crypto: &dyn CryptoProvider,
    ) -> Result<AccountState, ProtocolError> {
        let mut next = self.clone();
        for (index, tx) in txs.iter().enumerate() {
            next.check(tx, crypto)
                .map_err(|reason| ProtocolError::InvalidTransaction { index, reason })?;
            next.apply_unchecked(tx);
        }
        Ok(next)
    }

    pub fn total(&self) -> u64 {
        self.balances.values().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerEntry {
    pub slot: u64,
    pub value: Body,
    pub digest: Digest,
    pub cert: Arc<Certificate>,
    /// `hash(prev_chain, slot, digest)`.
    pub chain: Digest,
    /// Configuration whose committee decided this slot.
    pub config: u64,
}

pub fn chain_digest(prev: &Digest, slot: u64, digest: &Digest) -> Digest {
    let mut enc = Encoder::with_domain(b"solida/chain");
    enc.raw(&prev.0).u64(slot).raw(&digest.0);
    oracle(&enc.finish())
}

#[derive(Clone, Debug)]
pub struct Ledger {
    genesis: Genesis,
    genesis_digest: Digest,
    entries: Vec<LedgerEntry>,
    /// `committees[c-1]` is configuration `c`.
    committees: Vec<CommitteeWindow>,
    /// `config_start[c-1]`: slot of the decision that created `c` (0 for genesis).
    config_start: Vec<u64>,
    state: AccountState,
    admitted: HashSet<PublicKey>,
}

impl Ledger {
    pub fn new(genesis: Genesis) -> Result<Self, ProtocolError> {
        let committee = CommitteeWindow::genesis(&genesis.committee)?;
        let state = AccountState::from_genesis(&genesis);
        let admitted = genesis.committee.iter().copied().collect();
        Ok(Self {
            genesis_digest: genesis.digest(),
            genesis,
            entries: Vec::new(),
            committees: vec![committee],
            config_start: vec![0],
            state,
            admitted,
        })
    }

    pub fn genesis(&self) -> &Genesis {
        &self.genesis
    }

    pub fn threshold(&self) -> &Threshold {
        &self.genesis.threshold
    }

    pub fn len(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn entry(&self, slot: u64) -> Option<&LedgerEntry> {
        slot.checked_sub(1)
            .and_then(|i| self.entries.get(i as usize))
    }

    pub fn state(&self) -> &AccountState {
        &self.state
    }

    pub fn committee(&self) -> &CommitteeWindow {
        self.committees.last().expect("at least the genesis committee")
    }

    pub fn config(&self) -> u64 {
        self.committees.len() as u64
    }

    pub fn committee_for(&self, config: u64) -> Option<&CommitteeWindow> {
        config
            .checked_sub(1)
            .and_then(|i| self.committees.get(i as usize))
    }

    /// Committee that decides (or decided) `slot`.
    pub fn committee_for_slot(&self, slot: u64) -> &CommitteeWindow {
        match self.entry(slot) {
            Some(e) => self.committee_for(e.config).expect("recorded config"),
            None => self.committee(),
        }
    }

    pub fn config_start(&self, config: u64) -> Option<u64> {
        config
            .checked_sub(1)
            .and_then(|i| self.config_start.get(i as usize))
            .copied()
    }

    /// Value digest of `slot`; slot 0 is the virtual genesis slot.
    pub fn digest_at(&self, slot: u64) -> Option<Digest> {
        if slot == 0 {
            Some(self.genesis_digest)
        } else {
            self.entry(slot).map(|e| e.digest)
        }
    }

    pub fn chain_at(&self, slot: u64) -> Option<Digest> {
        if slot == 0 {
            Some(self.genesis_digest)
        } else {
            self.entry(slot).map(|e| e.chain)
        }
    }

    pub fn head_chain(&self) -> Digest {
        self.chain_at(self.len()).expect("head exists")
    }

    pub fn is_admitted(&self, pk: &PublicKey) -> bool {
        self.admitted.contains(pk)
    }

    /// Decision `(slot, digest)` that created configuration `config`.
    pub fn creating_decision(&self, config: u64) -> Option<(u64, Digest)> {
        if config <= 1 {
            return None;
        }
        let slot = self.config_start(config)?;
        Some((slot, self.entry(slot)?.digest))
    }

    /// Whether `value` may fill the next slot on top of the current head.
    pub fn validate_next(
        &self,
        value: &SlotValue,
        crypto: &dyn CryptoProvider,
    ) -> Result<(), ProtocolError> {
        match value {
            SlotValue::TxBatch { transactions } => {
                self.state.apply_batch(transactions, crypto)?;
                Ok(())
            }
            SlotValue::Reconfig(ev) => {
                if ev.new_member != ev.pow.pk || self.is_admitted(&ev.new_member) {
                    return Err(ProtocolError::InvalidPow);
                }
                if ev.closing_digest != self.head_chain() {
                    return Err(ProtocolError::InvalidPow);
                }
                if !reconfig::verify_pow(&ev.pow, self.config(), self, crypto) {
                    return Err(ProtocolError::InvalidPow);
                }
                Ok(())
            }
        }
    }

    /// Append the next slot. `cert` must be a commit certificate for
    /// `(·, slot, value.digest())` from the committee in force.
    pub fn append(
        &mut self,
        slot: u64,
        value: Body,
        cert: Arc<Certificate>,
        crypto: &dyn CryptoProvider,
    ) -> Result<(), ProtocolError> {
        if slot != self.len() + 1 {
            return Err(ProtocolError::LedgerGap {
                slot,
                len: self.len(),
            });
        }
        let digest = value.digest();
        let config = self.config();
        match value.as_ref() {
            SlotValue::TxBatch { transactions } => {
                // A committed batch was validated by at least f+1 honest
                // members; failure here means the quorum assumption broke.
                self.state = self.state.apply_batch(transactions, crypto)?;
            }
            SlotValue::Reconfig(ev) => {
                let next = reconfig::apply_reconfig(self, ev, crypto)?;
                self.committees.push(next);
                self.config_start.push(slot);
                self.admitted.insert(ev.new_member);
            }
        }
        let chain = chain_digest(&self.head_chain(), slot, &digest);
        self.entries.push(LedgerEntry {
            slot,
            value,
            digest,
            cert,
            chain,
            config,
        });
        Ok(())
    }

    /// Verify a commit certificate for `(slot, digest)` against the committee
    /// deciding `slot`.
    pub fn verify_commit(
        &self,
        cert: &Certificate,
        slot: u64,
        digest: &Digest,
        crypto: &dyn CryptoProvider,
    ) -> bool {
        let Some(view) = cert.view() else {
            return false;
        };
        cert.kind == CertKind::Commit
            && cert.verify(
                &Binding::Slot {
                    view,
                    slot,
                    digest: *digest,
                },
                self.committee_for_slot(slot),
                crypto,
            )
    }

    pub fn export(&self) -> LedgerExport {
        LedgerExport {
            version: LedgerExport::VERSION,
            genesis: self.genesis.clone(),
            entries: self
                .entries
                .iter()
                .map(|e| ExportEntry {
                    slot: e.slot,
                    value: e.value.as_ref().clone(),
                    cert: e.cert.as_ref().clone(),
                    chain: e.chain,
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportEntry {
    pub slot: u64,
    pub value: SlotValue,
    pub cert: Certificate,
    pub chain: Digest,
}

/// Offline-auditable ledger dump (JSON with hex byte strings).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerExport {
    pub version: u32,
    pub genesis: Genesis,
    pub entries: Vec<ExportEntry>,
}

impl LedgerExport {
    pub const VERSION: u32 = 1;
}

/// View of the certificate that committed `slot`, for notify headers.
pub fn commit_view(entry: &LedgerEntry) -> ViewTuple {
    entry.cert.view().expect("committed entries carry bound certificates")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{Keypair, SimCrypto};
    use crate::message::{Header, SignedHeader};

    pub(crate) fn fixture(n: usize) -> (Vec<Keypair>, Ledger) {
        let keys: Vec<_> = (0..n)
            .map(|i| SimCrypto.keypair_from_seed(format!("m{i}").as_bytes()))
            .collect();
        let g = Genesis {
            committee: keys.iter().map(|k| k.public()).collect(),
            balances: keys.iter().map(|k| (k.public(), 100)).collect(),
            threshold: Threshold::MAX,
        };
        (keys, Ledger::new(g).unwrap())
    }

    fn commit_cert(keys: &[Keypair], slot: u64, digest: Digest) -> Arc<Certificate> {
        Arc::new(Certificate::new(
            CertKind::Commit,
            keys.iter()
                .map(|k| {
                    SignedHeader::sign(
                        Header::Commit {
                            view: ViewTuple::new(1, 0, 0),
                            slot,
                            digest,
                        },
                        k,
                        &SimCrypto,
                    )
                })
                .collect(),
        ))
    }

    fn tx(from: &Keypair, to: &Keypair, amount: u64, seq: u64) -> Transaction {
        let sig = SimCrypto.sign(
            from,
            &Transaction::signing_bytes(&from.public(), &to.public(), amount, seq),
        );
        Transaction {
            from: from.public(),
            to: to.public(),
            amount,
            seq,
            sig,
        }
    }

    #[test]
    fn density_enforced() {
        let (keys, mut l) = fixture(4);
        let v = Arc::new(SlotValue::empty_batch());
        let c = commit_cert(&keys[..3], 2, v.digest());
        assert_eq!(
            l.append(2, v.clone(), c, &SimCrypto),
            Err(ProtocolError::LedgerGap { slot: 2, len: 0 })
        );
        let c1 = commit_cert(&keys[..3], 1, v.digest());
        assert!(l.verify_commit(&c1, 1, &v.digest(), &SimCrypto));
        l.append(1, v.clone(), c1, &SimCrypto).unwrap();
        assert_eq!(l.len(), 1);
        assert_eq!(
            l.chain_at(1),
            Some(chain_digest(&l.genesis().digest(), 1, &v.digest()))
        );
    }

    #[test]
    fn transactions_checked_against_balances() {
        let (keys, l) = fixture(4);
        let ok = vec![tx(&keys[0], &keys[1], 60, 0), tx(&keys[0], &keys[1], 40, 1)];
        let after = l.state().apply_batch(&ok, &SimCrypto).unwrap();
        assert_eq!(after.balance(&keys[0].public()), 0);
        assert_eq!(after.balance(&keys[1].public()), 200);
        assert_eq!(after.total(), l.state().total());

        let overdraw = vec![tx(&keys[0], &keys[1], 60, 0), tx(&keys[0], &keys[1], 41, 1)];
        assert_eq!(
            l.state().apply_batch(&overdraw, &SimCrypto),
            Err(ProtocolError::InvalidTransaction {
                index: 1,
                reason: "insufficient balance"
            })
        );
        let replay = vec![tx(&keys[0], &keys[1], 1, 0), tx(&keys[0], &keys[1], 1, 0)];
        assert!(l.state().apply_batch(&replay, &SimCrypto).is_err());
        let mut forged = tx(&keys[0], &keys[1], 1, 0);
        forged.amount = 2;
        assert!(l.state().apply_batch(&[forged], &SimCrypto).is_err());
    }
}
