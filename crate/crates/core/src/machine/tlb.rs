//! Fully associative data TLB with LRU replacement.

use crate::types::{PAddr, VAddr};

#[derive(Debug, Clone)]
struct TlbEntry {
    vpn: u64,
    ppn: u64,
    recency: u64,
}

#[derive(Debug, Clone)]
pub struct Tlb {
    entries: Vec<TlbEntry>,
    capacity: usize,
    page_bytes: u64,
    tick: u64,
}

impl Tlb {
    pub fn new(capacity: usize, page_bytes: u64) -> Self {
        assert!(capacity >= 1);
        assert!(page_bytes.is_power_of_two());
        Tlb {
            entries: Vec::with_capacity(capacity),
            capacity,
            page_bytes,
            tick: 0,
        }
    }

    pub fn page_bytes(&self) -> u64 {
        self.page_bytes
    }

    /// Look up `vaddr`'s page. Hit returns the translated physical address;
    /// miss returns None and the caller walks the page table and calls
    /// [`Tlb::insert`].
    pub fn lookup(&mut self, vaddr: VAddr) -> Option<PAddr> {
        let vpn = vaddr / self.page_bytes;
        self.tick += 1;
        let tick = self.tick;
        for e in &mut self.entries {
            if e.vpn == vpn {
                e.recency = tick;
                return Some(e.ppn * self.page_bytes + vaddr % self.page_bytes);
            }
        }
        None
    }

    pub fn insert(&mut self, vaddr: VAddr, paddr: PAddr) {
        let vpn = vaddr / self.page_bytes;
        let ppn = paddr / self.page_bytes;
        self.tick += 1;
        if let Some(e) = self.entries.iter_mut().find(|e| e.vpn == vpn) {
            e.ppn = ppn;
            e.recency = self.tick;
            return;
        }
        if self.entries.len() == self.capacity {
            let lru = self
                .entries
                .iter()
                .enumerate()
                .min_by_key(|(_, e)| e.recency)
                .map(|(i, _)| i)
                .unwrap();
            self.entries.swap_remove(lru);
        }
        self.entries.push(TlbEntry {
            vpn,
            ppn,
            recency: self.tick,
        });
    }

    /// Drop the mapping for the page containing `vaddr`, if cached.
    pub fn invalidate_page(&mut self, vaddr: VAddr) {
        let vpn = vaddr / self.page_bytes;
        self.entries.retain(|e| e.vpn != vpn);
    }

    pub fn flush(&mut self) {
        self.entries.clear();
    }
}
