//! Status collection and re-proposal proofs.

use std::collections::HashSet;
use std::sync::Arc;

use crate::certificate::{Binding, CertKind, Certificate};
use crate::crypto::CryptoProvider;
use crate::error::ProtocolError;
use crate::ledger::Ledger;
use crate::message::{Header, ReproposeMsg, SignedHeader, StatusHeader, StatusMsg};
use crate::types::{Body, CommitteeWindow, Digest, ViewTuple};

/// `(s*, C*, A*, S)` plus the values they certify.
#[derive(Clone, Debug)]
pub struct StatusSummary {
    pub view: ViewTuple,
    pub s_star: u64,
    pub h_star: Digest,
    pub chain_star: Digest,
    pub commit_cert: Option<Arc<Certificate>>,
    pub committed_body: Option<Body>,
    /// Highest-ranked accepted value for `s*+1`.
    pub h_prime: Option<(ViewTuple, Digest)>,
    pub accept_cert: Option<Arc<Certificate>>,
    pub accepted_body: Option<Body>,
    pub statuses: Vec<SignedHeader>,
}

fn status_of(h: &SignedHeader) -> Option<&StatusHeader> {
    match &h.header {
        Header::Status(s) => Some(s),
        _ => None,
    }
}

/// `s*` and the highest accepted rank for `s*+1` among status headers.
/// Equal-rank conflicting digests certify more than f faults.
fn scan(statuses: &[&StatusHeader]) -> Result<(u64, Option<(ViewTuple, Digest)>), ProtocolError> {
    let s_star = statuses
        .iter()
        .map(|s| s.last_slot)
        .max()
        .ok_or(ProtocolError::MalformedSummary("no statuses"))?;
    let mut best: Option<(ViewTuple, Digest)> = None;
    for s in statuses.iter().filter(|s| s.last_slot == s_star) {
        if let Some((r, d)) = s.accepted {
            match best {
                Some((br, bd)) if br == r && bd != d => {
                    return Err(ProtocolError::ConflictingAccepts(r));
                }
                Some((br, _)) if br >= r => {}
                _ => best = Some((r, d)),
            }
        }
    }
    Ok((s_star, best))
}

/// Pick `s*`, `C*`, `A*` from 2f+1 individually verified statuses for `view`.
pub fn summarize_status(
    view: ViewTuple,
    statuses: &[Arc<StatusMsg>],
) -> Result<StatusSummary, ProtocolError> {
    let mut signers = HashSet::new();
    for m in statuses {
        let s = m.status();
        if s.view != view {
            return Err(ProtocolError::MalformedSummary("status for another view"));
        }
        if s.slot != s.last_slot + 1 {
            return Err(ProtocolError::MalformedSummary("status slot is not last_slot+1"));
        }
        if !signers.insert(m.header.signer) {
            return Err(ProtocolError::MalformedSummary("duplicate status signer"));
        }
    }
    let headers: Vec<&StatusHeader> = statuses.iter().map(|m| m.status()).collect();
    let (s_star, h_prime) = scan(&headers)?;
    let reporter = statuses
        .iter()
        .find(|m| m.status().last_slot == s_star)
        .expect("s* is reported by someone");
    let rep = reporter.status();
    let (accept_cert, accepted_body) = match h_prime {
        None => (None, None),
        Some(best) => {
            let reports = || {
                statuses
                    .iter()
                    .filter(|m| m.status().last_slot == s_star && m.status().accepted == Some(best))
            };
            // Prefer a reporter that also shipped the body.
            let m = reports()
                .find(|m| m.accepted_body.is_some())
                .or_else(|| reports().next())
                .expect("best rank is reported by someone");
            (m.accept_cert.clone(), m.accepted_body.clone())
        }
    };
    Ok(StatusSummary {
        view,
        s_star,
        h_star: rep.last_digest,
        chain_star: rep.last_chain,
        commit_cert: reporter.commit_cert.clone(),
        committed_body: reporter.committed_body.clone(),
        h_prime,
        accept_cert,
        accepted_body,
        statuses: statuses.iter().map(|m| m.header.clone()).collect(),
    })
}

/// What a valid re-proposal establishes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReproposeProof {
    pub s_star: u64,
    pub h_star: Digest,
    pub chain_star: Digest,
}

/// Validate `S`, `C*`, `A*` and `h'` of a re-proposal for the committee
/// `committee` of the re-proposal's view. The signer check is the caller's.
pub fn verify_repropose(
    msg: &ReproposeMsg,
    committee: &CommitteeWindow,
    ledger: &Ledger,
    crypto: &dyn CryptoProvider,
) -> Result<ReproposeProof, ProtocolError> {
    let (view, slot, h_prime) = msg.binding();
    if msg.statuses.len() != committee.quorum() {
        return Err(ProtocolError::BadCertificate);
    }
    let mut signers = HashSet::new();
    let mut headers = Vec::with_capacity(msg.statuses.len());
    for h in &msg.statuses {
        let s = status_of(h).ok_or(ProtocolError::BadCertificate)?;
        if s.view != view
            || s.slot != s.last_slot + 1
            || !committee.contains(&h.signer)
            || !signers.insert(h.signer)
        {
            return Err(ProtocolError::BadCertificate);
        }
        headers.push(s);
    }
    let (s_star, best) = scan(&headers)?;
    if slot != s_star + 1 {
        return Err(ProtocolError::MalformedSummary("s* is not the highest committed slot"));
    }
    let mut reported = headers.iter().filter(|s| s.last_slot == s_star);
    let first = reported.next().expect("s* reported");
    let (h_star, chain_star) = (first.last_digest, first.last_chain);
    if reported.any(|s| s.last_digest != h_star || s.last_chain != chain_star) {
        return Err(ProtocolError::MalformedSummary("statuses disagree on slot s*"));
    }
    if !msg.statuses.iter().all(|h| h.verify(crypto)) {
        return Err(ProtocolError::BadCertificate);
    }
    if s_star > 0 {
        let c = msg.commit_cert.as_ref().ok_or(ProtocolError::BadCertificate)?;
        let known = ledger.digest_at(s_star);
        if let Some(d) = known {
            if d != h_star {
                return Err(ProtocolError::MalformedSummary("h* conflicts with the local ledger"));
            }
        }
        if !ledger.verify_commit(c, s_star, &h_star, crypto) {
            return Err(ProtocolError::BadCertificate);
        }
    } else if h_star != ledger.digest_at(0).expect("genesis") {
        return Err(ProtocolError::MalformedSummary("slot 0 is not the genesis digest"));
    }
    match (best, &msg.accept_cert) {
        (None, None) => {}
        (Some((rank, d)), Some(a)) => {
            if d != h_prime {
                return Err(ProtocolError::MalformedSummary("h' is not the value certified by A*"));
            }
            let expected = Binding::Slot {
                view: rank,
                slot,
                digest: d,
            };
            if a.kind != CertKind::Accept || !a.verify(&expected, committee, crypto) {
                return Err(ProtocolError::BadCertificate);
            }
        }
        _ => return Err(ProtocolError::MalformedSummary("A* is not the highest-ranked accept")),
    }
    if msg.body.digest() != h_prime {
        return Err(ProtocolError::MalformedSummary("body does not hash to h'"));
    }
    Ok(ReproposeProof {
        s_star,
        h_star,
        chain_star,
    })
}
