//! Metadata mapping table: one tag byte per fixed-size physical region,
//! laid out contiguously in simulated memory.

use crate::types::{PAddr, TagId};

#[derive(Debug, Clone)]
pub struct Mmt {
    base_paddr: PAddr,
    granularity_bytes: u64,
    entries: Vec<u8>,
}

pub fn mmt_index(paddr: PAddr, granularity_bytes: u64) -> u64 {
    debug_assert!(granularity_bytes.is_power_of_two());
    paddr / granularity_bytes
}

impl Mmt {
    /// Table covering `phys_mem_bytes` of memory at the given region size,
    /// resident at `base_paddr`.
    pub fn new(base_paddr: PAddr, phys_mem_bytes: u64, granularity_bytes: u64) -> Self {
        assert!(granularity_bytes.is_power_of_two());
        let regions = phys_mem_bytes / granularity_bytes;
        Mmt {
            base_paddr,
            granularity_bytes,
            entries: vec![0; regions as usize],
        }
    }

    pub fn granularity_bytes(&self) -> u64 {
        self.granularity_bytes
    }

    pub fn regions(&self) -> u64 {
        self.entries.len() as u64
    }

    /// Table footprint in simulated memory (1 byte per region).
    pub fn footprint_bytes(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn region_of(&self, paddr: PAddr) -> u64 {
        mmt_index(paddr, self.granularity_bytes)
    }

    /// Physical address of the table byte holding `region`'s tag.
    pub fn entry_paddr(&self, region: u64) -> PAddr {
        self.base_paddr + region
    }

    pub fn tag_of_region(&self, region: u64) -> TagId {
        TagId(self.entries[region as usize])
    }

    /// Tag every region overlapping [pstart, pstart+len); a partial overlap
    /// tags the whole region. Returns the regions written (empty for len 0).
    pub fn set_range(&mut self, pstart: PAddr, len: u64, tag: TagId) -> std::ops::Range<u64> {
        if len == 0 {
            return 0..0;
        }
        let first = self.region_of(pstart);
        let last = self.region_of(pstart + len - 1);
        assert!(
            (last as usize) < self.entries.len(),
            "range [{pstart:#x}, +{len:#x}) beyond tagged memory"
        );
        for r in first..=last {
            self.entries[r as usize] = tag.0;
        }
        first..last + 1
    }
}
