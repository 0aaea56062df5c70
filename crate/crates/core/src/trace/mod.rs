//! Trace model and file I/O: the event vocabulary the simulator replays,
//! the header carrying generator provenance and the initial memory image,
//! and the expected-outcome summary used by validators and tests.

pub mod format;
pub mod gen;
pub mod graph;
pub mod instrument;
pub mod safety;
pub mod validate;

use crate::isa::MetaOp;
use crate::os::TrapKind;
use crate::types::VAddr;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessKind {
    Load,
    Store,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "event")]
pub enum TraceEvent {
    MemAccess {
        kind: AccessKind,
        vaddr: VAddr,
        size_bytes: u32,
    },
    Meta(MetaOp),
    /// Function call: the return address lands in `ret_slot` (an implicit
    /// store from the core's point of view).
    Call {
        ret_slot: VAddr,
    },
    /// Function return: the return address is read back from `ret_slot`.
    Return {
        ret_slot: VAddr,
    },
    ComputeCycles {
        n: u64,
    },
    /// Marks the immediately following memory access as an injected
    /// violation of the given kind.
    Label {
        kind: TrapKind,
    },
}

impl TraceEvent {
    pub fn load(vaddr: VAddr, size_bytes: u32) -> Self {
        TraceEvent::MemAccess {
            kind: AccessKind::Load,
            vaddr,
            size_bytes,
        }
    }

    pub fn store(vaddr: VAddr, size_bytes: u32) -> Self {
        TraceEvent::MemAccess {
            kind: AccessKind::Store,
            vaddr,
            size_bytes,
        }
    }
}

/// Initial memory snapshot for value-dependent workloads (pointer chains,
/// graph arrays). Word values keyed by their exact virtual address;
/// anything absent reads as zero. The image is immutable during replay.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemImage {
    words: BTreeMap<VAddr, u64>,
}

impl MemImage {
    pub fn set(&mut self, vaddr: VAddr, value: u64) {
        self.words.insert(vaddr, value);
    }

    pub fn value_at(&self, vaddr: VAddr) -> u64 {
        *self.words.get(&vaddr).unwrap_or(&0)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VAddr, &u64)> {
        self.words.iter()
    }
}

/// What the generator promises about the trace: where it injected
/// violations, and (for graph workloads) the exact dependent-address walk
/// a perfect prefetcher would perform.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedOutcome {
    /// (event index of the faulting access, kind)
    pub violations: Vec<(u64, TrapKind)>,
    pub oracle_prefetches: Vec<VAddr>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub generator: String,
    pub seed: u64,
    /// Generator parameters, in a fixed order chosen by the generator.
    pub params: Vec<(String, u64)>,
    /// Upper bound on addresses the trace touches.
    pub aspace_bytes: u64,
    pub image: MemImage,
    pub expected: ExpectedOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub header: TraceHeader,
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn new(generator: &str, seed: u64, params: Vec<(String, u64)>) -> Self {
        Trace {
            header: TraceHeader {
                generator: generator.to_string(),
                seed,
                params,
                aspace_bytes: 0,
                image: MemImage::default(),
                expected: ExpectedOutcome::default(),
            },
            events: Vec::new(),
        }
    }

    pub fn param(&self, name: &str) -> Option<u64> {
        self.header
            .params
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, v)| v)
    }

    /// Set the declared address-space bound from the events present,
    /// rounded up to a page.
    pub fn seal_aspace(&mut self, page_bytes: u64) {
        let mut max = 0u64;
        let mut bump = |a: u64| max = max.max(a);
        for e in &self.events {
            match *e {
                TraceEvent::MemAccess {
                    vaddr, size_bytes, ..
                } => bump(vaddr + size_bytes as u64),
                TraceEvent::Call { ret_slot } | TraceEvent::Return { ret_slot } => {
                    bump(ret_slot + 8)
                }
                TraceEvent::Meta(ref op) => {
                    if let Some((start, extent)) = meta_extent(op) {
                        bump(start + extent);
                    }
                }
                _ => {}
            }
        }
        for (&a, _) in self.header.image.iter() {
            max = max.max(a + 8);
        }
        self.header.aspace_bytes = max.div_ceil(page_bytes) * page_bytes;
    }
}

/// Total virtual extent of a map/unmap operator, for bounds accounting.
pub fn meta_extent(op: &MetaOp) -> Option<(VAddr, u64)> {
    match *op {
        MetaOp::Create { .. } => None,
        MetaOp::Map { vstart, size, .. } | MetaOp::Unmap { vstart, size } => {
            Some((vstart, size))
        }
        MetaOp::Map2D {
            vstart,
            len_x,
            size_x,
            size_y,
            ..
        }
        | MetaOp::Unmap2D {
            vstart,
            len_x,
            size_x,
            size_y,
        } => Some((vstart, size_x * size_y.saturating_sub(1) + len_x)),
        MetaOp::Map3D {
            vstart,
            len_x,
            len_y,
            size_x,
            size_y,
            size_z,
            ..
        }
        | MetaOp::Unmap3D {
            vstart,
            len_x,
            len_y,
            size_x,
            size_y,
            size_z,
        } => Some((
            vstart,
            size_y * size_x * size_z.saturating_sub(1)
                + size_x * len_y.saturating_sub(1)
                + len_x,
        )),
    }
}

/// Fix up expected-violation positions after events moved around.
/// `old_to_new[i]` is the new index of old event `i`, or `None` if it was
/// removed.
pub(crate) fn remap_violations(expected: &mut ExpectedOutcome, old_to_new: &[Option<u64>]) {
    expected.violations = expected
        .violations
        .iter()
        .filter_map(|&(pos, kind)| {
            old_to_new
                .get(pos as usize)
                .copied()
                .flatten()
                .map(|p| (p, kind))
        })
        .collect();
}

/// Drop every metadata operator, keeping the plain memory behavior.
/// Baseline runs ("no metadata system") replay these.
pub fn strip_meta(trace: &Trace) -> Trace {
    let mut t = trace.clone();
    let mut old_to_new = vec![None; t.events.len()];
    let mut events = Vec::with_capacity(t.events.len());
    for (i, ev) in t.events.iter().enumerate() {
        if matches!(ev, TraceEvent::Meta(_)) {
            continue;
        }
        old_to_new[i] = Some(events.len() as u64);
        events.push(ev.clone());
    }
    t.events = events;
    remap_violations(&mut t.header.expected, &old_to_new);
    t
}
