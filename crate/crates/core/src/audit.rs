//! Offline re-verification of an exported ledger.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::certificate::CertKind;
use crate::crypto::{pow_hash, puzzle_digest, CryptoProvider};
use crate::ledger::{Ledger, LedgerExport};
use crate::reconfig::{check_puzzle, PuzzleContext};
use crate::types::SlotValue;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub slots: u64,
    pub transactions: u64,
    pub reconfigurations: u64,
    pub final_config: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditError {
    /// First offending slot; 0 for problems with the export itself.
    pub slot: u64,
    pub reason: String,
}

impl fmt::Display for AuditError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "slot {}: {}", self.slot, self.reason)
    }
}

impl std::error::Error for AuditError {}

fn fail(slot: u64, reason: impl Into<String>) -> AuditError {
    AuditError {
        slot,
        reason: reason.into(),
    }
}

/// Replay `export` from genesis, checking every certificate, transaction,
/// puzzle and PoW, and the chained digests.
pub fn audit(export: &LedgerExport, crypto: &dyn CryptoProvider) -> Result<AuditReport, AuditError> {
    if export.version != LedgerExport::VERSION {
        return Err(fail(0, format!("unsupported export version {}", export.version)));
    }
    let mut ledger = Ledger::new(export.genesis.clone()).map_err(|e| fail(0, e.to_string()))?;
    let mut report = AuditReport {
        slots: 0,
        transactions: 0,
        reconfigurations: 0,
        final_config: 1,
    };
    for entry in &export.entries {
        let slot = entry.slot;
        if slot != ledger.len() + 1 {
            return Err(fail(slot, format!("expected slot {}", ledger.len() + 1)));
        }
        let digest = entry.value.digest();
        if entry.cert.kind != CertKind::Commit {
            return Err(fail(slot, "certificate is not a commit certificate"));
        }
        if !ledger.verify_commit(&entry.cert, slot, &digest, crypto) {
            return Err(fail(slot, "commit certificate does not verify"));
        }
        if let SlotValue::Reconfig(ev) = &entry.value {
            if ev.new_member != ev.pow.pk {
                return Err(fail(slot, "new member is not the PoW finder"));
            }
            if ledger.is_admitted(&ev.new_member) {
                return Err(fail(slot, "member admitted twice"));
            }
            if ev.closing_digest != ledger.head_chain() {
                return Err(fail(slot, "closing digest does not match the ledger prefix"));
            }
            let ctx = PuzzleContext::from_ledger(&ledger, ledger.config())
                .ok_or_else(|| fail(slot, "configuration history missing"))?;
            check_puzzle(&ev.pow.puzzle, &ctx, crypto).map_err(|e| fail(slot, e.to_string()))?;
            let h = pow_hash(&puzzle_digest(&ev.pow.puzzle), &ev.pow.pk, ev.pow.nonce);
            if !ledger.threshold().accepts(&h) {
                return Err(fail(slot, "PoW hash above threshold"));
            }
            report.reconfigurations += 1;
        }
        report.transactions += entry.value.tx_count() as u64;
        ledger
            .append(slot, Arc::new(entry.value.clone()), Arc::new(entry.cert.clone()), crypto)
            .map_err(|e| fail(slot, e.to_string()))?;
        if ledger.head_chain() != entry.chain {
            return Err(fail(slot, "chained digest mismatch"));
        }
        report.slots += 1;
    }
    report.final_config = ledger.config();
    Ok(report)
}
