use thiserror::Error;

use crate::types::ViewTuple;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("committee size {n} is not of the form 3f+1")]
    CommitteeSize { n: usize },
    #[error("committee join indices are not consecutive")]
    CommitteeOrder,
    #[error("configuration mismatch: view is in configuration {view}, committee is {committee}")]
    ConfigMismatch { view: u64, committee: u64 },
    #[error("slot {slot} is not the next slot (ledger length {len})")]
    LedgerGap { slot: u64, len: u64 },
    #[error("fresh-slot watermark for view {0} is not established")]
    NoWatermark(ViewTuple),
    #[error("not the leader of view {0}")]
    NotLeader(ViewTuple),
    #[error("slot {0} is not fresh")]
    StaleSlot(u64),
    #[error("a different proposal was already made for slot {slot} in view {view}")]
    AlreadyProposed { view: ViewTuple, slot: u64 },
    #[error("invalid transaction at index {index}: {reason}")]
    InvalidTransaction { index: usize, reason: &'static str },
    #[error("insufficient matching notify headers: have {have}, need {need}")]
    InsufficientNotifies { have: usize, need: usize },
    #[error("invalid proof of work")]
    InvalidPow,
    #[error("conflicting accept certificates of equal rank {0} for the same slot")]
    ConflictingAccepts(ViewTuple),
    #[error("malformed status summary: {0}")]
    MalformedSummary(&'static str),
    #[error("certificate does not verify")]
    BadCertificate,
}
