//! Puzzles, PoW verification, committee sliding and the external leader's
//! case analysis.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::crypto::{pow_hash, puzzle_digest, CryptoProvider, Threshold};
use crate::error::ProtocolError;
use crate::ledger::Ledger;
use crate::message::{Header, SignedHeader};
use crate::status::StatusSummary;
use crate::types::{CommitteeWindow, Digest, PowSolution, Puzzle, ReconfigEvent, SlotValue, ViewTuple};

/// What a puzzle for configuration `config` must commit to: `f+1` notify
/// headers from the committee that decided `(slot, digest)`.
#[derive(Clone, Copy, Debug)]
pub struct PuzzleContext<'a> {
    pub config: u64,
    /// `None` for the genesis configuration.
    pub deciding: Option<(&'a CommitteeWindow, u64, Digest)>,
}

impl<'a> PuzzleContext<'a> {
    pub fn from_ledger(ledger: &'a Ledger, config: u64) -> Option<Self> {
        if config == 1 {
            return Some(Self {
                config,
                deciding: None,
            });
        }
        let (slot, digest) = ledger.creating_decision(config)?;
        Some(Self {
            config,
            deciding: Some((ledger.committee_for(config - 1)?, slot, digest)),
        })
    }
}

/// Collect `f+1` matching notify headers for the decision into a puzzle.
/// Extra headers are ignored; any `f+1`-subset is a valid puzzle.
pub fn build_puzzle(
    ctx: &PuzzleContext<'_>,
    notifies: &[SignedHeader],
    crypto: &dyn CryptoProvider,
) -> Result<Puzzle, ProtocolError> {
    let Some((committee, slot, digest)) = ctx.deciding else {
        return Ok(Puzzle::genesis());
    };
    let need = committee.f() + 1;
    // Group by view: all puzzle headers must be byte-identical up to signer.
    let mut groups: BTreeMap<ViewTuple, Vec<&SignedHeader>> = BTreeMap::new();
    let mut seen = HashSet::new();
    for h in notifies {
        if let Header::Notify { view, slot: s, digest: d } = &h.header {
            if *s == slot
                && *d == digest
                && committee.contains(&h.signer)
                && seen.insert((*view, h.signer))
                && h.verify(crypto)
            {
                groups.entry(*view).or_default().push(h);
            }
        }
    }
    let best = groups.values().max_by_key(|g| g.len()).map(|g| g.len()).unwrap_or(0);
    match groups.into_values().find(|g| g.len() >= need) {
        Some(g) => Ok(Puzzle {
            config: ctx.config,
            headers: g.into_iter().take(need).cloned().collect(),
        }),
        None => Err(ProtocolError::InsufficientNotifies { have: best, need }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PuzzleError {
    WrongConfig,
    InsufficientHeaders,
    TooManyHeaders,
    Mismatched,
    BadSigner,
    BadSignature,
}

impl std::fmt::Display for PuzzleError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PuzzleError::WrongConfig => "puzzle is for another configuration",
            PuzzleError::InsufficientHeaders => "insufficient puzzle headers",
            PuzzleError::TooManyHeaders => "too many puzzle headers",
            PuzzleError::Mismatched => "puzzle headers do not match the reconfiguration decision",
            PuzzleError::BadSigner => "puzzle header signer outside the deciding committee",
            PuzzleError::BadSignature => "puzzle header signature invalid",
        })
    }
}

pub fn check_puzzle(
    puzzle: &Puzzle,
    ctx: &PuzzleContext<'_>,
    crypto: &dyn CryptoProvider,
) -> Result<(), PuzzleError> {
    if puzzle.config != ctx.config {
        return Err(PuzzleError::WrongConfig);
    }
    let Some((committee, slot, digest)) = ctx.deciding else {
        return if puzzle.headers.is_empty() {
            Ok(())
        } else {
            Err(PuzzleError::TooManyHeaders)
        };
    };
    let need = committee.f() + 1;
    if puzzle.headers.len() < need {
        return Err(PuzzleError::InsufficientHeaders);
    }
    if puzzle.headers.len() > need {
        return Err(PuzzleError::TooManyHeaders);
    }
    let first = &puzzle.headers[0].header;
    let mut signers = HashSet::new();
    for h in &puzzle.headers {
        match &h.header {
            Header::Notify { slot: s, digest: d, .. } if *s == slot && *d == digest && h.header == *first => {}
            _ => return Err(PuzzleError::Mismatched),
        }
        if !committee.contains(&h.signer) || !signers.insert(h.signer) {
            return Err(PuzzleError::BadSigner);
        }
    }
    if !puzzle.headers.iter().all(|h| h.verify(crypto)) {
        return Err(PuzzleError::BadSignature);
    }
    Ok(())
}

pub fn verify_pow_in(
    sol: &PowSolution,
    ctx: &PuzzleContext<'_>,
    threshold: &Threshold,
    crypto: &dyn CryptoProvider,
) -> bool {
    check_puzzle(&sol.puzzle, ctx, crypto).is_ok()
        && threshold.accepts(&pow_hash(&puzzle_digest(&sol.puzzle), &sol.pk, sol.nonce))
}

/// PoW check for configuration `config` using the ledger's history.
pub fn verify_pow(sol: &PowSolution, config: u64, ledger: &Ledger, crypto: &dyn CryptoProvider) -> bool {
    match PuzzleContext::from_ledger(ledger, config) {
        Some(ctx) => verify_pow_in(sol, &ctx, ledger.threshold(), crypto),
        None => false,
    }
}

/// The committee after `ev` commits on top of `ledger`.
pub fn apply_reconfig(
    ledger: &Ledger,
    ev: &ReconfigEvent,
    crypto: &dyn CryptoProvider,
) -> Result<CommitteeWindow, ProtocolError> {
    if ev.new_member != ev.pow.pk || ledger.is_admitted(&ev.new_member) {
        return Err(ProtocolError::InvalidPow);
    }
    if !verify_pow(&ev.pow, ledger.config(), ledger, crypto) {
        return Err(ProtocolError::InvalidPow);
    }
    ledger.committee().slide(ev.new_member)
}

/// Whether `value` is a reconfiguration out of configuration `config`.
pub fn closes_config(value: &SlotValue, config: u64) -> bool {
    matches!(value, SlotValue::Reconfig(ev) if ev.pow.puzzle.config == config)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconfigCase {
    /// `h*` already reconfigured: reveal `C*` and stop.
    Terminate,
    /// `h'` is a rival reconfiguration: re-propose it and stop.
    ReproposeAndTerminate,
    /// Nothing accepted: put our own event into `s*+1`.
    ProposeReconfig,
    /// Re-propose `h'` into `s*+1`, then propose our event into `s*+2`.
    ReproposeThenReconfig,
}

/// The external leader's four-way case split on `(h*, h')`.
pub fn decide_reconfig_action(summary: &StatusSummary) -> Result<ReconfigCase, ProtocolError> {
    let c = summary.view.c;
    if summary.s_star > 0 {
        let h_star = summary
            .committed_body
            .as_ref()
            .ok_or(ProtocolError::MalformedSummary("committed value body missing"))?;
        if h_star.digest() != summary.h_star {
            return Err(ProtocolError::MalformedSummary("committed body does not match h*"));
        }
        // A committed reconfiguration wins regardless of h'.
        if closes_config(h_star, c) {
            return Ok(ReconfigCase::Terminate);
        }
    }
    match &summary.h_prime {
        None => Ok(ReconfigCase::ProposeReconfig),
        Some((_, d)) => {
            let body = summary
                .accepted_body
                .as_ref()
                .ok_or(ProtocolError::MalformedSummary("accepted value body missing"))?;
            if body.digest() != *d {
                return Err(ProtocolError::MalformedSummary("accepted body does not match h'"));
            }
            if body.is_reconfig() {
                Ok(ReconfigCase::ReproposeAndTerminate)
            } else {
                Ok(ReconfigCase::ReproposeThenReconfig)
            }
        }
    }
}
