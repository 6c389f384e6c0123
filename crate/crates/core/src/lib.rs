//! Core protocol logic for a rolling-committee blockchain that elects new
//! members by proof of work and orders the ledger with PBFT-style consensus.
//!
//! The crate is organised bottom-up:
//!
//! * [`crypto`] - signature / random-oracle providers and PoW grinding.
//! * [`types`], [`message`], [`certificate`], [`ledger`] - value types shared
//!   by every participant, with a canonical byte encoding.
//! * [`schedule`] - leader ranking and the leader schedule.
//! * [`engine`] - the per-participant event-driven state machine.
//! * [`reconfig`] - puzzles, PoW verification and the external-leader
//!   decision procedure.
//! * [`audit`] - offline re-verification of an exported ledger.
//!
//! Every state machine is deterministic: given the same inputs in the same
//! order it emits the same actions.

pub mod audit;
pub mod certificate;
pub mod crypto;
pub mod encoding;
pub mod engine;
pub mod error;
pub mod ledger;
pub mod message;
pub mod reconfig;
pub mod schedule;
pub mod status;
pub mod types;

pub use certificate::{Binding, CertKind, Certificate};
pub use crypto::{CryptoKind, CryptoProvider, Keypair, RealCrypto, SimCrypto, Threshold};
pub use engine::{Action, Input, Note, Replica, ReplicaConfig, TimerId, TimerKind};
pub use error::ProtocolError;
pub use ledger::{AccountState, Genesis, Ledger, LedgerEntry};
pub use message::{Header, Message, SignedHeader};
pub use reconfig::ReconfigCase;
pub use schedule::{leader_of, LeaderRef};
pub use status::StatusSummary;
pub use types::{
    CommitteeWindow, Digest, MemberId, PowSolution, PublicKey, Puzzle, ReconfigEvent, Signature,
    SlotValue, Time, Transaction, ViewTuple,
};
