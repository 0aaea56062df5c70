//! Structural checks on a parsed trace. Integrity of the on-disk bytes is
//! the reader's job; this pass catches traces that parse but cannot
//! replay sensibly.

use super::{meta_extent, Trace, TraceEvent};
use crate::isa::MetaOp;

/// Returns one human-readable line per problem found; an empty list means
/// the trace is replayable.
pub fn validate(trace: &Trace) -> Vec<String> {
    let mut problems = Vec::new();
    if trace.events.is_empty() {
        problems.push("trace has no events".to_string());
    }
    if trace.header.aspace_bytes == 0 {
        problems.push("address-space size is zero".to_string());
    }

    let aspace = trace.header.aspace_bytes;
    let mut last_meta: Option<usize> = None;
    let mut label_pending: Option<usize> = None;
    let mut accesses_after_meta = true;

    for (i, ev) in trace.events.iter().enumerate() {
        match ev {
            TraceEvent::MemAccess {
                vaddr, size_bytes, ..
            } => {
                if !matches!(size_bytes, 1 | 2 | 4 | 8) {
                    problems.push(format!("event {i}: access size {size_bytes} not a power of two up to 8"));
                }
                if vaddr + *size_bytes as u64 > aspace {
                    problems.push(format!(
                        "event {i}: access at {vaddr:#x} outside the {aspace:#x}-byte address space"
                    ));
                }
                label_pending = None;
                accesses_after_meta = true;
            }
            TraceEvent::Call { ret_slot } | TraceEvent::Return { ret_slot } => {
                if ret_slot + 8 > aspace {
                    problems.push(format!(
                        "event {i}: return slot {ret_slot:#x} outside the address space"
                    ));
                }
                accesses_after_meta = true;
            }
            TraceEvent::Meta(op) => {
                if let MetaOp::Create { tag, .. } = op {
                    if tag.is_untagged() {
                        problems.push(format!("event {i}: create with reserved tag 0"));
                    }
                }
                if let Some((vstart, len)) = meta_extent(op) {
                    if len == 0 {
                        problems.push(format!("event {i}: map of zero bytes"));
                    }
                    if vstart + len > aspace {
                        problems.push(format!(
                            "event {i}: map extent {vstart:#x}+{len:#x} outside the address space"
                        ));
                    }
                }
                last_meta = Some(i);
                accesses_after_meta = false;
            }
            TraceEvent::Label { .. } => {
                if let Some(prev) = label_pending {
                    problems.push(format!(
                        "event {prev}: label not followed by a memory access before event {i}"
                    ));
                }
                label_pending = Some(i);
            }
            TraceEvent::ComputeCycles { n } => {
                if *n == 0 {
                    problems.push(format!("event {i}: zero-length compute block"));
                }
            }
        }
    }

    if let (Some(i), false) = (last_meta, accesses_after_meta) {
        problems.push(format!(
            "event {i}: trailing metadata operator never bound to an access"
        ));
    }
    if let Some(i) = label_pending {
        problems.push(format!("event {i}: label at end of trace"));
    }

    for &(pos, _) in &trace.header.expected.violations {
        match trace.events.get(pos as usize) {
            Some(TraceEvent::MemAccess { .. }) => {}
            _ => problems.push(format!(
                "expected violation at position {pos} does not point at a memory access"
            )),
        }
    }

    problems
}
