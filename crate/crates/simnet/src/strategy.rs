//! Byzantine behaviour as filters over a replica's outgoing messages.
//!
//! A Byzantine member runs the ordinary replica; its strategy then drops,
//! delays or rewrites what the replica wants to send. Strategies only sign
//! with keys the adversary owns, and [`check_crafted`] enforces that.

use std::sync::Arc;

use solida_core::message::Header;
use solida_core::{CryptoProvider, Keypair, Ledger, Message, SignedHeader, SlotValue, Transaction};
use thiserror::Error;

use crate::scenario::StrategyKind;

#[derive(Clone, Debug)]
pub enum Outgoing {
    Send {
        to: Vec<solida_core::PublicKey>,
        msg: Arc<Message>,
        max_delay: bool,
    },
    Propagate {
        msg: Arc<Message>,
        max_delay: bool,
    },
}

impl Outgoing {
    pub fn msg(&self) -> &Arc<Message> {
        match self {
            Outgoing::Send { msg, .. } | Outgoing::Propagate { msg, .. } => msg,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("forgery attempt: {0}")]
pub struct Forgery(pub String);

/// A strategy-built message may only carry a primary header signed by a
/// key the adversary owns.
pub fn check_crafted(
    msg: &Message,
    owns: impl Fn(&solida_core::PublicKey) -> bool,
    crypto: &dyn CryptoProvider,
) -> Result<(), Forgery> {
    let Some(h) = msg.header() else {
        return Ok(());
    };
    if !owns(&h.signer) {
        return Err(Forgery(format!("{} header signed as {}", msg.name(), h.signer.short())));
    }
    if !h.verify(crypto) {
        return Err(Forgery(format!("{} header does not verify", msg.name())));
    }
    Ok(())
}

fn self_transfer(key: &Keypair, seq: u64, crypto: &dyn CryptoProvider) -> Transaction {
    let pk = key.public();
    Transaction {
        from: pk,
        to: pk,
        amount: 1,
        seq,
        sig: crypto.sign(key, &Transaction::signing_bytes(&pk, &pk, 1, seq)),
    }
}

/// A transaction for self-dealing leaders to propose.
pub fn self_dealing_tx(key: &Keypair, seq: u64, crypto: &dyn CryptoProvider) -> Transaction {
    self_transfer(key, seq, crypto)
}

/// A valid batch that differs from `body`, or `None` if none is available.
fn conflicting_body(body: &SlotValue, key: &Keypair, ledger: &Ledger, crypto: &dyn CryptoProvider) -> Option<SlotValue> {
    let SlotValue::TxBatch { transactions } = body else {
        return None;
    };
    let mut txs = transactions.clone();
    if txs.pop().is_some() {
        return Some(SlotValue::TxBatch { transactions: txs });
    }
    let state = ledger.state();
    if state.balance(&key.public()) == 0 {
        return None;
    }
    let tx = self_transfer(key, state.next_seq(&key.public()), crypto);
    Some(SlotValue::TxBatch { transactions: vec![tx] })
}

/// Rewrite one replica output under `kind`.
pub fn apply(
    kind: StrategyKind,
    out: Outgoing,
    key: &Keypair,
    ledger: &Ledger,
    crypto: &dyn CryptoProvider,
) -> Result<Vec<Outgoing>, Forgery> {
    let name = out.msg().name();
    match kind {
        StrategyKind::Silent if matches!(name, "propose" | "repropose" | "new_view" | "reveal") => Ok(vec![]),
        StrategyKind::NotifyHoarder if matches!(name, "notify" | "decision") => Ok(vec![]),
        StrategyKind::MaxDelay => Ok(vec![match out {
            Outgoing::Send { to, msg, .. } => Outgoing::Send {
                to,
                msg,
                max_delay: true,
            },
            Outgoing::Propagate { msg, .. } => Outgoing::Propagate { msg, max_delay: true },
        }]),
        StrategyKind::Equivocating => equivocate(out, key, ledger, crypto),
        _ => Ok(vec![out]),
    }
}

fn equivocate(out: Outgoing, key: &Keypair, ledger: &Ledger, crypto: &dyn CryptoProvider) -> Result<Vec<Outgoing>, Forgery> {
    let Outgoing::Send { to, msg, max_delay } = out else {
        return Ok(vec![out]);
    };
    let Message::Propose { header, body } = msg.as_ref() else {
        return Ok(vec![Outgoing::Send { to, msg, max_delay }]);
    };
    let Header::Propose { view, slot, .. } = header.header else {
        return Ok(vec![Outgoing::Send { to, msg, max_delay }]);
    };
    let alt = match conflicting_body(body, key, ledger, crypto) {
        Some(alt) if to.len() >= 2 => alt,
        _ => return Ok(vec![Outgoing::Send { to, msg, max_delay }]),
    };
    let alt_header = SignedHeader::sign(
        Header::Propose {
            view,
            slot,
            digest: alt.digest(),
        },
        key,
        crypto,
    );
    let alt_msg = Message::Propose {
        header: alt_header,
        body: Arc::new(alt),
    };
    check_crafted(&alt_msg, |pk| *pk == key.public(), crypto)?;
    let half = to.len() / 2;
    Ok(vec![
        Outgoing::Send {
            to: to[..half].to_vec(),
            msg,
            max_delay,
        },
        Outgoing::Send {
            to: to[half..].to_vec(),
            msg: Arc::new(alt_msg),
            max_delay,
        },
    ])
}
