//! Trace-driven simulator of a hardware metadata-management system: a
//! tagged-memory plane (tag table, tag cache, per-client property tables)
//! attached to a small in-order core, plus the optimization clients that
//! consume it and the workload generators and experiment harness used to
//! characterize its overheads.

pub mod clients;
pub mod config;
pub mod error;
pub mod experiments;
pub mod isa;
pub mod machine;
pub mod metadata;
pub mod os;
pub mod sim;
pub mod trace;
pub mod types;
