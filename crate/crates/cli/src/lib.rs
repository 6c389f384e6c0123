//! Library side of the `solida` binary: sweeps, tables and audits that the
//! acceptance suite also drives directly.

pub mod commands;
pub mod grid;
pub mod sweep;
pub mod table;
pub mod trace_audit;
