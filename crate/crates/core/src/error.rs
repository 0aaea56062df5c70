//! Error types. Configuration problems, metadata-plane contract violations,
//! trace file problems, and runtime simulation faults are kept distinct so
//! the CLI can map them to its exit codes.

use crate::types::{ClientId, TagId, VAddr};
use thiserror::Error;

/// Invalid configuration (bad geometry, unknown key, unparsable value).
#[derive(Debug, Error)]
#[error("config error: {msg}")]
pub struct ConfigError {
    msg: String,
}

impl ConfigError {
    pub fn new(msg: impl Into<String>) -> Self {
        ConfigError { msg: msg.into() }
    }
}

/// Violation of a metadata-plane operation contract.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetadataError {
    #[error("tag 0 is reserved (untagged)")]
    ReservedTag,
    #[error("metadata of {len} bytes exceeds PMT entry capacity of {capacity} bytes")]
    Capacity { len: usize, capacity: usize },
    #[error("no registered client with id {0}")]
    UnknownClient(ClientId),
    #[error("tag {0} write requires a registered client PMT")]
    NoPmt(TagId),
}

/// Fault raised while replaying a trace; carries the event index so the
/// harness can report where a malformed trace broke.
#[derive(Debug, Error)]
pub enum SimFault {
    #[error("unmapped virtual address {vaddr:#x} at trace position {pos}")]
    UnmappedAddress { vaddr: VAddr, pos: usize },
    #[error("address {vaddr:#x} outside physical memory at trace position {pos}")]
    OutOfRange { vaddr: VAddr, pos: usize },
    #[error("metadata operator failed at trace position {pos}: {source}")]
    MetaOp {
        pos: usize,
        #[source]
        source: MetadataError,
    },
    #[error("trace position {pos}: {msg}")]
    Malformed { pos: usize, msg: String },
}

/// Trace file I/O, parse, or integrity failure.
#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("integrity error: checksum trailer {found:#x} does not match body {computed:#x}")]
    Integrity { found: u64, computed: u64 },
    #[error("trace validation failed: {0}")]
    Invalid(String),
}

impl TraceError {
    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        TraceError::Parse {
            line,
            msg: msg.into(),
        }
    }
}
