//! Cycle and event counters collected by every simulation run.

use serde::{Deserialize, Serialize};

/// All counters are monotonically non-decreasing during a run.
///
/// `mmc_hits + mmc_misses == lookups_issued - lookups_dropped` holds at all
/// times: a dropped lookup never probes deep enough to count as hit or miss.
#[derive(Debug, Default, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub cycles: u64,
    pub instructions: u64,
    pub l1_hits: u64,
    pub l1_misses: u64,
    pub tlb_hits: u64,
    pub tlb_misses: u64,
    pub mem_accesses: u64,
    pub mmc_hits: u64,
    pub mmc_misses: u64,
    pub mmt_mem_accesses: u64,
    pub lookups_issued: u64,
    pub lookups_dropped: u64,
    pub prefetches_issued: u64,
    pub prefetches_useful: u64,
    pub traps: u64,
    pub map_ops: u64,
    pub create_ops: u64,
}

impl Stats {
    /// MMC hit rate over resolved (non-dropped) lookups; 0 when none resolved.
    pub fn mmc_hit_rate(&self) -> f64 {
        let resolved = self.mmc_hits + self.mmc_misses;
        if resolved == 0 {
            0.0
        } else {
            self.mmc_hits as f64 / resolved as f64
        }
    }

    /// L1 hit rate over all L1 accesses; 0 when the cache was never touched.
    pub fn l1_hit_rate(&self) -> f64 {
        let total = self.l1_hits + self.l1_misses;
        if total == 0 {
            0.0
        } else {
            self.l1_hits as f64 / total as f64
        }
    }

    /// Names of all counters, in the order used by the CSV schema.
    pub const COUNTER_NAMES: [&'static str; 17] = [
        "cycles",
        "instructions",
        "l1_hits",
        "l1_misses",
        "tlb_hits",
        "tlb_misses",
        "mem_accesses",
        "mmc_hits",
        "mmc_misses",
        "mmt_mem_accesses",
        "lookups_issued",
        "lookups_dropped",
        "prefetches_issued",
        "prefetches_useful",
        "traps",
        "map_ops",
        "create_ops",
    ];

    /// Counter values in the same order as [`Stats::COUNTER_NAMES`].
    pub fn counter_values(&self) -> [u64; 17] {
        [
            self.cycles,
            self.instructions,
            self.l1_hits,
            self.l1_misses,
            self.tlb_hits,
            self.tlb_misses,
            self.mem_accesses,
            self.mmc_hits,
            self.mmc_misses,
            self.mmt_mem_accesses,
            self.lookups_issued,
            self.lookups_dropped,
            self.prefetches_issued,
            self.prefetches_useful,
            self.traps,
            self.map_ops,
            self.create_ops,
        ]
    }
}
