//! Graph-prefetcher support: the per-structure metadata payload, the
//! buffer prefetched lines land in, and the issue queue that feeds fills
//! into the memory system as MSHRs free up.

use crate::types::{Cycle, VAddr};
use std::collections::VecDeque;

/// Per-structure metadata for dependent-chain prefetching, stored in one
/// PMT slot: the structure's own bounds, the element geometry, and where
/// the chain goes next. `chain_root` marks the structure whose demand
/// accesses start chains (the work list).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphPrefetchMeta {
    pub own_base: VAddr,
    pub own_size: u64,
    pub elem_size: u64,
    pub stride: u64,
    pub chain_root: bool,
    /// Base and element size of the next structure in the chain, if any.
    pub next: Option<(VAddr, u64)>,
}

// the payload must fit one default-size PMT slot
const _: () = assert!(GraphPrefetchMeta::ENCODED_LEN <= 64);

impl GraphPrefetchMeta {
    pub const ENCODED_LEN: usize = 28;

    pub fn contains(&self, addr: VAddr) -> bool {
        addr >= self.own_base && addr < self.own_base + self.own_size
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut b = vec![0u8; Self::ENCODED_LEN];
        b[0..8].copy_from_slice(&self.own_base.to_le_bytes());
        b[8..16].copy_from_slice(&self.own_size.to_le_bytes());
        b[16] = self.elem_size as u8;
        b[17] = self.stride as u8;
        let (next_base, next_elem) = self.next.unwrap_or((0, 0));
        b[18] = u8::from(self.next.is_some()) | (u8::from(self.chain_root) << 1);
        b[19..27].copy_from_slice(&next_base.to_le_bytes());
        b[27] = next_elem as u8;
        b
    }

    pub fn decode(b: &[u8]) -> Option<Self> {
        if b.len() < Self::ENCODED_LEN {
            return None;
        }
        let own_base = u64::from_le_bytes(b[0..8].try_into().unwrap());
        let own_size = u64::from_le_bytes(b[8..16].try_into().unwrap());
        let elem_size = b[16] as u64;
        let stride = b[17] as u64;
        if !matches!(elem_size, 1 | 2 | 4 | 8) || stride < 1 || own_size == 0 {
            return None;
        }
        let has_next = b[18] & 1 != 0;
        let chain_root = b[18] & 2 != 0;
        let next_base = u64::from_le_bytes(b[19..27].try_into().unwrap());
        let next_elem = b[27] as u64;
        Some(GraphPrefetchMeta {
            own_base,
            own_size,
            elem_size,
            stride,
            chain_root,
            next: has_next.then_some((next_base, next_elem)),
        })
    }
}

/// Small FIFO of prefetched lines sitting next to the L1. A line may still
/// be in flight (`ready_at` in the future); a demand hit waits out the
/// remainder and moves the line into the L1. Beyond capacity the oldest
/// line is dropped.
#[derive(Debug, Clone)]
pub struct PrefetchBuffer {
    cap: usize,
    lines: VecDeque<(u64, Cycle)>,
}

impl PrefetchBuffer {
    pub fn new(cap: usize) -> Self {
        PrefetchBuffer {
            cap,
            lines: VecDeque::new(),
        }
    }

    pub fn contains(&self, line_no: u64) -> bool {
        self.lines.iter().any(|&(l, _)| l == line_no)
    }

    pub fn insert(&mut self, line_no: u64, ready_at: Cycle) {
        if self.contains(line_no) {
            return;
        }
        if self.lines.len() == self.cap {
            self.lines.pop_front();
        }
        self.lines.push_back((line_no, ready_at));
    }

    /// Remove and return the line's fill-completion time on a demand match.
    pub fn take(&mut self, line_no: u64) -> Option<Cycle> {
        let idx = self.lines.iter().position(|&(l, _)| l == line_no)?;
        self.lines.remove(idx).map(|(_, t)| t)
    }

    pub fn flush(&mut self) {
        self.lines.clear();
    }
}

/// Prefetch requests waiting for a free MSHR. Bounded; when full, the
/// oldest waiting request is discarded.
#[derive(Debug, Clone)]
pub struct PrefetchQueue {
    cap: usize,
    q: VecDeque<(u64, Cycle)>,
}

impl PrefetchQueue {
    pub fn new(cap: usize) -> Self {
        PrefetchQueue {
            cap,
            q: VecDeque::new(),
        }
    }

    pub fn push(&mut self, line_no: u64, earliest: Cycle) {
        if self.q.iter().any(|&(l, _)| l == line_no) {
            return;
        }
        if self.q.len() == self.cap {
            self.q.pop_front();
        }
        self.q.push_back((line_no, earliest));
    }

    pub fn pop_ready(&mut self, now: Cycle) -> Option<u64> {
        match self.q.front() {
            Some(&(_, t)) if t <= now => self.q.pop_front().map(|(l, _)| l),
            _ => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}
