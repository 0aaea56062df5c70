//! In-order core model: one L1 data cache, a data TLB, a bandwidth-limited
//! memory controller, and an MSHR file bounding outstanding fills.
//!
//! The machine charges cycles for demand accesses; background traffic
//! (prefetch fills, posted metadata writes) shares the memory controller's
//! issue bandwidth but does not stall the core.

pub mod cache;
pub mod config;
pub mod mem;
pub mod stats;
pub mod tlb;

pub use cache::{Replacement, SetAssocCache};
pub use config::MachineConfig;
pub use mem::{MemController, MshrFile};
pub use stats::Stats;
pub use tlb::Tlb;

use crate::types::{mix_seed, Cycle, PAddr, VAddr};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const RNG_SALT: u64 = 0x6d61_6368; // distinct stream per subsystem

/// Where a demand access was serviced from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Serviced {
    L1Hit,
    PrefetchBuffer,
    Memory,
}

#[derive(Debug, Clone)]
pub struct Machine {
    pub cfg: MachineConfig,
    pub l1: SetAssocCache,
    pub tlb: Tlb,
    pub mem: MemController,
    pub mshr: MshrFile,
    pub stats: Stats,
    pub now: Cycle,
    rng: ChaCha8Rng,
}

impl Machine {
    pub fn new(cfg: &MachineConfig, seed: u64) -> Machine {
        Machine {
            cfg: cfg.clone(),
            l1: SetAssocCache::new(
                cfg.l1_sets(),
                cfg.l1_ways,
                cfg.l1_line_bytes,
                Replacement::Lru,
            ),
            tlb: Tlb::new(cfg.tlb_entries, cfg.page_bytes),
            mem: MemController::new(cfg.mem_latency_cycles, cfg.mem_issue_interval_cycles),
            mshr: MshrFile::new(cfg.mshr_entries),
            stats: Stats::default(),
            now: 0,
            rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, RNG_SALT)),
        }
    }

    /// Retire non-memory work: n instructions at one cycle each.
    pub fn compute(&mut self, n: u64) {
        self.now += n;
        self.stats.instructions += n;
    }

    /// Translate a data address, charging a stalled page-table walk on a
    /// TLB miss. `walk` resolves the mapping (the OS page map); `None`
    /// means the address is unmapped and nothing is charged beyond the walk.
    pub fn translate(
        &mut self,
        vaddr: VAddr,
        walk: impl FnOnce(VAddr) -> Option<PAddr>,
    ) -> Option<PAddr> {
        if let Some(pa) = self.tlb.lookup(vaddr) {
            self.stats.tlb_hits += 1;
            return Some(pa);
        }
        self.stats.tlb_misses += 1;
        for _ in 0..self.cfg.tlb_walk_mem_accesses {
            self.now = self.mem_request_at(self.now);
        }
        let pa = walk(vaddr)?;
        self.tlb.insert(vaddr, pa);
        let off = vaddr % self.cfg.page_bytes;
        Some(pa / self.cfg.page_bytes * self.cfg.page_bytes + off)
    }

    /// One demand load/store, post-translation. `buffer_ready` is the fill
    /// completion cycle if the line was found in the prefetch buffer; the
    /// core waits out any remaining fill time, then pays an L1-hit latency
    /// to read it. A true miss waits for a free MSHR (background fills can
    /// hold both) and then for memory completion.
    pub fn demand_access(&mut self, paddr: PAddr, buffer_ready: Option<Cycle>) -> Serviced {
        self.now += 1;
        self.stats.instructions += 1;
        let (hit, _) = self.l1.access(paddr, &mut self.rng);
        if hit {
            self.stats.l1_hits += 1;
            self.now += self.cfg.l1_hit_cycles;
            return Serviced::L1Hit;
        }
        self.stats.l1_misses += 1;
        if let Some(ready) = buffer_ready {
            self.stats.prefetches_useful += 1;
            self.now = self.now.max(ready) + self.cfg.l1_hit_cycles;
            return Serviced::PrefetchBuffer;
        }
        if self.mshr.free_at(self.now) == 0 {
            self.now = self.now.max(self.mshr.next_free());
        }
        let done = self.mem_request_at(self.now);
        self.now = done;
        Serviced::Memory
    }

    /// Issue one memory request at `at` (core does not stall); returns its
    /// completion cycle. Shared by demand misses, TLB walks, metadata-table
    /// reads and writes, and prefetch fills, so all of them contend for the
    /// same issue bandwidth.
    pub fn mem_request_at(&mut self, at: Cycle) -> Cycle {
        self.stats.mem_accesses += 1;
        self.mem.request(at)
    }
}
