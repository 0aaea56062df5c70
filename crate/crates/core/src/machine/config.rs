//! Machine timing parameters.

use crate::error::ConfigError;
use crate::types::is_pow2;
use serde::{Deserialize, Serialize};

/// Parameters of the in-order core, L1 data cache, data TLB, and the
/// latency+bandwidth memory controller.
///
/// Defaults model the evaluated platform: 16 KB 4-way L1 with 64 B lines and
/// a 4-cycle hit, 2 MSHRs, a 16-entry LRU DTLB, 4 KB pages. DRAM latency and
/// issue bandwidth are calibration knobs (the platform only pins their
/// relative scaling), defaulting to 100 cycles and one request per 4 cycles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MachineConfig {
    pub l1_size_bytes: u64,
    pub l1_ways: usize,
    pub l1_line_bytes: u64,
    pub l1_hit_cycles: u64,
    pub mshr_entries: usize,
    pub tlb_entries: usize,
    pub page_bytes: u64,
    pub mem_latency_cycles: u64,
    pub mem_issue_interval_cycles: u64,
    pub tlb_walk_mem_accesses: u64,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig {
            l1_size_bytes: 16 * 1024,
            l1_ways: 4,
            l1_line_bytes: 64,
            l1_hit_cycles: 4,
            mshr_entries: 2,
            tlb_entries: 16,
            page_bytes: 4096,
            mem_latency_cycles: 100,
            mem_issue_interval_cycles: 4,
            tlb_walk_mem_accesses: 1,
        }
    }
}

impl MachineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let counts = [
            ("l1_size_bytes", self.l1_size_bytes),
            ("l1_ways", self.l1_ways as u64),
            ("l1_line_bytes", self.l1_line_bytes),
            ("l1_hit_cycles", self.l1_hit_cycles),
            ("mshr_entries", self.mshr_entries as u64),
            ("tlb_entries", self.tlb_entries as u64),
            ("page_bytes", self.page_bytes),
            ("mem_latency_cycles", self.mem_latency_cycles),
            ("mem_issue_interval_cycles", self.mem_issue_interval_cycles),
            ("tlb_walk_mem_accesses", self.tlb_walk_mem_accesses),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(ConfigError::new(format!("{name} must be >= 1")));
            }
        }
        if !self.l1_size_bytes.is_multiple_of(self.l1_ways as u64 * self.l1_line_bytes) {
            return Err(ConfigError::new(format!(
                "l1_size_bytes ({}) must be divisible by l1_ways * l1_line_bytes ({})",
                self.l1_size_bytes,
                self.l1_ways as u64 * self.l1_line_bytes
            )));
        }
        if !is_pow2(self.l1_line_bytes) {
            return Err(ConfigError::new("l1_line_bytes must be a power of two"));
        }
        if !is_pow2(self.page_bytes) {
            return Err(ConfigError::new("page_bytes must be a power of two"));
        }
        Ok(())
    }

    pub fn l1_sets(&self) -> usize {
        (self.l1_size_bytes / (self.l1_ways as u64 * self.l1_line_bytes)) as usize
    }
}
