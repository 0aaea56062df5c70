//! The metadata plane: tag table in memory (MMT), the small tag cache
//! next to the core (MMC), one private metadata table per client (PMT),
//! and the timed lookup pipeline connecting them.

pub mod mmc;
pub mod mmt;
pub mod pmt;

pub use mmc::{Mmc, MmcMode};
pub use mmt::{mmt_index, Mmt};
pub use pmt::{Pmt, PMT_SLOTS};

use crate::error::MetadataError;
use crate::machine::Machine;
use crate::types::{mix_seed, ClientId, Cycle, PAddr, TagId, VAddr};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const RNG_SALT: u64 = 0x6d65_7461;

/// How the tag table itself is addressed on a refill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranslationMode {
    /// Table reads use physical addresses directly.
    Physical,
    /// Table reads go through the data TLB like any other access.
    Virtual,
}

/// What a lookup costs the core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LookupMode {
    /// Core stalls for the full lookup latency.
    ForceStall,
    /// Core continues; latency is charged to the memory system only.
    NoStall,
    /// Like NoStall, but a lookup that misses the MMC while a refill is
    /// already in flight is dropped outright.
    BestEffort,
}

#[derive(Debug, Clone)]
pub struct LookupResult {
    /// Tag for the queried address; absent only when dropped.
    pub tag: Option<TagId>,
    /// PMT slot contents for that tag; absent when dropped or untagged.
    pub metadata: Option<Vec<u8>>,
    pub mmc_hit: bool,
    pub dropped: bool,
    /// Latency the core must wait out (ForceStall only).
    pub stall_cycles: u64,
    /// Latency absorbed by the memory system (NoStall / BestEffort).
    pub background_cycles: u64,
    /// Cycle at which the result is available.
    pub done_at: Cycle,
}

impl LookupResult {
    fn dropped(at: Cycle) -> Self {
        LookupResult {
            tag: None,
            metadata: None,
            mmc_hit: false,
            dropped: true,
            stall_cycles: 0,
            background_cycles: 0,
            done_at: at,
        }
    }
}

/// Construction parameters for the plane (mirrored from the run config).
#[derive(Debug, Clone)]
pub struct PlaneParams {
    pub mmt_base_paddr: PAddr,
    pub phys_mem_bytes: u64,
    pub granularity_bytes: u64,
    pub mmc_entries: usize,
    pub mmc_hit_cycles: u64,
    pub mmc_mode: MmcMode,
    /// Client whose MMC fills are evicted last (prioritized mode).
    pub sticky_client: Option<ClientId>,
    pub translation_mode: TranslationMode,
    pub pmt_entry_bytes: usize,
    /// MMT entries covered by one posted table-write request.
    pub mmt_line_regions: u64,
}

#[derive(Debug, Clone)]
struct ClientRec {
    id: ClientId,
    pmt: Pmt,
    armed: Option<TagId>,
}

#[derive(Debug, Clone)]
pub struct MetadataPlane {
    pub mmt: Mmt,
    pub mmc: Mmc,
    clients: Vec<ClientRec>,
    translation_mode: TranslationMode,
    mmc_hit_cycles: u64,
    sticky_client: Option<ClientId>,
    mmt_line_regions: u64,
    /// Completion time of the in-flight MMT refill, if any. One refill can
    /// be outstanding at a time; best-effort lookups that miss behind it
    /// are dropped.
    pub refill_busy_until: Cycle,
    rng: ChaCha8Rng,
}

impl MetadataPlane {
    pub fn new(p: &PlaneParams, client_ids: &[ClientId], seed: u64) -> Self {
        MetadataPlane {
            mmt: Mmt::new(p.mmt_base_paddr, p.phys_mem_bytes, p.granularity_bytes),
            mmc: Mmc::new(p.mmc_entries, p.mmc_mode, client_ids),
            clients: client_ids
                .iter()
                .map(|&id| ClientRec {
                    id,
                    pmt: Pmt::new(p.pmt_entry_bytes),
                    armed: None,
                })
                .collect(),
            translation_mode: p.translation_mode,
            mmc_hit_cycles: p.mmc_hit_cycles,
            sticky_client: p.sticky_client,
            mmt_line_regions: p.mmt_line_regions,
            refill_busy_until: 0,
            rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, RNG_SALT)),
        }
    }

    fn client_mut(&mut self, id: ClientId) -> Result<&mut ClientRec, MetadataError> {
        self.clients
            .iter_mut()
            .find(|c| c.id == id)
            .ok_or(MetadataError::UnknownClient(id))
    }

    pub fn pmt_write(
        &mut self,
        client: ClientId,
        tag: TagId,
        metadata: &[u8],
    ) -> Result<(), MetadataError> {
        self.client_mut(client)?.pmt.write(tag, metadata)
    }

    pub fn pmt_read(&self, client: ClientId, tag: TagId) -> Result<&[u8], MetadataError> {
        self.clients
            .iter()
            .find(|c| c.id == client)
            .map(|c| c.pmt.read(tag))
            .ok_or(MetadataError::UnknownClient(client))
    }

    /// Latch `tag` as the client's most recent CREATE.
    pub fn arm(&mut self, client: ClientId, tag: TagId) -> Result<(), MetadataError> {
        self.client_mut(client)?.armed = Some(tag);
        Ok(())
    }

    /// Consume the armed tag, if any.
    pub fn take_armed(&mut self, client: ClientId) -> Option<TagId> {
        self.clients
            .iter_mut()
            .find(|c| c.id == client)
            .and_then(|c| c.armed.take())
    }

    pub fn peek_armed(&self, client: ClientId) -> Option<TagId> {
        self.clients
            .iter()
            .find(|c| c.id == client)
            .and_then(|c| c.armed)
    }

    /// Context-switch hygiene: private tables and armed tags are per-process.
    pub fn flush_pmts(&mut self) {
        for c in &mut self.clients {
            c.pmt.clear();
            c.armed = None;
        }
    }

    /// Tag a physical range in the MMT, invalidate shadowing MMC entries,
    /// and post the table-write traffic (one request per table line touched,
    /// issued back-to-back from `at`; the core does not wait). Returns the
    /// number of regions written.
    pub fn write_tag_range(
        &mut self,
        machine: &mut Machine,
        pstart: PAddr,
        len: u64,
        tag: TagId,
        at: Cycle,
    ) -> u64 {
        let regions = self.mmt.set_range(pstart, len, tag);
        for r in regions.clone() {
            self.mmc.invalidate(r);
        }
        let first_line = regions.start / self.mmt_line_regions;
        let last_line = (regions.end - 1) / self.mmt_line_regions;
        let mut t = at;
        for _ in first_line..=last_line {
            t = machine.mem_request_at(t);
        }
        regions.end - regions.start
    }

    /// The timed lookup pipeline, entered after the triggering access has
    /// translated `paddr`. `start_at` is when the query reaches the MMC;
    /// the caller decides whether the reported latency stalls the core.
    /// `walk` resolves page mappings when the table itself is virtually
    /// addressed.
    pub fn lookup(
        &mut self,
        machine: &mut Machine,
        client: ClientId,
        paddr: PAddr,
        mode: LookupMode,
        start_at: Cycle,
        walk: impl FnOnce(VAddr) -> Option<PAddr>,
    ) -> Result<LookupResult, MetadataError> {
        if !self.clients.iter().any(|c| c.id == client) {
            return Err(MetadataError::UnknownClient(client));
        }
        machine.stats.lookups_issued += 1;
        let region = self.mmt.region_of(paddr);

        if let Some(tag) = self.mmc.probe(region) {
            machine.stats.mmc_hits += 1;
            self.mmc
                .access(region, tag, client, false, &mut self.rng);
            let latency = self.mmc_hit_cycles;
            return Ok(self.finish(client, tag, true, mode, latency, start_at + latency));
        }

        // Miss discovered after the probe cycle.
        let mut t = start_at + self.mmc_hit_cycles;
        if mode == LookupMode::BestEffort && self.refill_busy_until > start_at {
            machine.stats.lookups_dropped += 1;
            return Ok(LookupResult::dropped(t));
        }
        machine.stats.mmc_misses += 1;
        t = t.max(self.refill_busy_until);

        if self.translation_mode == TranslationMode::Virtual {
            let entry_va = self.mmt.entry_paddr(region) as VAddr;
            if machine.tlb.lookup(entry_va).is_some() {
                machine.stats.tlb_hits += 1;
            } else {
                machine.stats.tlb_misses += 1;
                for _ in 0..machine.cfg.tlb_walk_mem_accesses {
                    t = machine.mem_request_at(t);
                }
                // The table sits in the reserved range user mappings skip;
                // the kernel maps it one-to-one.
                let pa = walk(entry_va).unwrap_or(entry_va);
                machine.tlb.insert(entry_va, pa);
            }
        }

        let done = machine.mem_request_at(t);
        machine.stats.mmt_mem_accesses += 1;
        self.refill_busy_until = done;

        let tag = self.mmt.tag_of_region(region);
        let sticky = self.sticky_client == Some(client);
        self.mmc.access(region, tag, client, sticky, &mut self.rng);
        Ok(self.finish(client, tag, false, mode, done - start_at, done))
    }

    fn finish(
        &self,
        client: ClientId,
        tag: TagId,
        mmc_hit: bool,
        mode: LookupMode,
        latency: u64,
        done_at: Cycle,
    ) -> LookupResult {
        let metadata = if tag.is_untagged() {
            None
        } else {
            self.clients
                .iter()
                .find(|c| c.id == client)
                .map(|c| c.pmt.read(tag).to_vec())
        };
        let (stall, background) = match mode {
            LookupMode::ForceStall => (latency, 0),
            LookupMode::NoStall | LookupMode::BestEffort => (0, latency),
        };
        LookupResult {
            tag: Some(tag),
            metadata,
            mmc_hit,
            dropped: false,
            stall_cycles: stall,
            background_cycles: background,
            done_at,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::MachineConfig;

    const C0: ClientId = ClientId(0);

    fn plane_params() -> PlaneParams {
        PlaneParams {
            mmt_base_paddr: 0xF00_0000,
            phys_mem_bytes: 1 << 28,
            granularity_bytes: 512,
            mmc_entries: 128,
            mmc_hit_cycles: 1,
            mmc_mode: MmcMode::Shared,
            sticky_client: None,
            translation_mode: TranslationMode::Virtual,
            pmt_entry_bytes: 64,
            mmt_line_regions: 64,
        }
    }

    fn setup() -> (MetadataPlane, Machine) {
        (
            MetadataPlane::new(&plane_params(), &[C0], 3),
            Machine::new(&MachineConfig::default(), 3),
        )
    }

    fn identity(va: VAddr) -> Option<PAddr> {
        Some(va)
    }

    #[test]
    fn hit_costs_one_cycle_force_stall() {
        let (mut p, mut m) = setup();
        p.mmt.set_range(0x1000, 512, TagId(5));
        // warm the MMC
        p.lookup(&mut m, C0, 0x1000, LookupMode::ForceStall, 0, identity)
            .unwrap();
        let r = p
            .lookup(&mut m, C0, 0x1100, LookupMode::ForceStall, 50, identity)
            .unwrap();
        assert!(r.mmc_hit);
        assert_eq!(r.stall_cycles, 1);
        assert_eq!(r.background_cycles, 0);
        assert_eq!(r.tag, Some(TagId(5)));
    }

    #[test]
    fn miss_costs_probe_plus_memory() {
        let (mut p, mut m) = setup();
        // MMT entry page already in the TLB: pure miss-path arithmetic.
        m.tlb.insert(p.mmt.entry_paddr(8), p.mmt.entry_paddr(8));
        let r = p
            .lookup(&mut m, C0, 0x1000, LookupMode::ForceStall, 0, identity)
            .unwrap();
        assert!(!r.mmc_hit);
        assert_eq!(r.stall_cycles, 1 + 100);
        assert_eq!(m.stats.mmt_mem_accesses, 1);
        assert_eq!(m.stats.mmc_misses, 1);
    }

    #[test]
    fn physical_mode_skips_table_translation() {
        let mut params = plane_params();
        params.translation_mode = TranslationMode::Physical;
        let mut p = MetadataPlane::new(&params, &[C0], 3);
        let mut m = Machine::new(&MachineConfig::default(), 3);
        let r = p
            .lookup(&mut m, C0, 0x1000, LookupMode::ForceStall, 0, identity)
            .unwrap();
        assert_eq!(r.stall_cycles, 1 + 100, "no walk charged");
        assert_eq!(m.stats.tlb_misses, 0);
    }

    #[test]
    fn virtual_mode_cold_tlb_adds_walk() {
        let (mut p, mut m) = setup();
        let r = p
            .lookup(&mut m, C0, 0x1000, LookupMode::ForceStall, 0, identity)
            .unwrap();
        // probe 1 + walk 100 + table read 100 (second request issues after
        // the walk completes, memory otherwise idle)
        assert_eq!(r.stall_cycles, 1 + 100 + 100);
        assert_eq!(m.stats.tlb_misses, 1);
    }

    #[test]
    fn best_effort_drops_behind_outstanding_refill() {
        let (mut p, mut m) = setup();
        let r1 = p
            .lookup(&mut m, C0, 0x1000, LookupMode::BestEffort, 0, identity)
            .unwrap();
        assert!(!r1.dropped);
        // second miss while the first refill is still in flight
        let r2 = p
            .lookup(&mut m, C0, 0x8000, LookupMode::BestEffort, 5, identity)
            .unwrap();
        assert!(r2.dropped);
        assert_eq!(r2.stall_cycles, 0);
        assert_eq!(r2.tag, None);
        assert_eq!(m.stats.lookups_dropped, 1);
        // hits still go through while the refill is outstanding
        let r3 = p
            .lookup(&mut m, C0, 0x1010, LookupMode::BestEffort, 6, identity)
            .unwrap();
        assert!(!r3.dropped && r3.mmc_hit);
        // and after the refill lands, misses fill again
        let r4 = p
            .lookup(
                &mut m,
                C0,
                0x8000,
                LookupMode::BestEffort,
                r1.done_at + 1,
                identity,
            )
            .unwrap();
        assert!(!r4.dropped);
    }

    #[test]
    fn no_stall_charges_background_only() {
        let (mut p, mut m) = setup();
        m.tlb.insert(p.mmt.entry_paddr(8), p.mmt.entry_paddr(8));
        let r = p
            .lookup(&mut m, C0, 0x1000, LookupMode::NoStall, 0, identity)
            .unwrap();
        assert_eq!(r.stall_cycles, 0);
        assert_eq!(r.background_cycles, 101);
        assert_eq!(r.tag, Some(TagId(0)));
    }

    #[test]
    fn no_stall_serializes_on_the_refill_slot() {
        let (mut p, mut m) = setup();
        m.tlb.insert(p.mmt.entry_paddr(8), p.mmt.entry_paddr(8));
        m.tlb.insert(p.mmt.entry_paddr(64), p.mmt.entry_paddr(64));
        let r1 = p
            .lookup(&mut m, C0, 0x1000, LookupMode::NoStall, 0, identity)
            .unwrap();
        let r2 = p
            .lookup(&mut m, C0, 0x8000, LookupMode::NoStall, 2, identity)
            .unwrap();
        // second refill cannot start until the first lands
        assert!(r2.done_at >= r1.done_at + 100);
    }

    #[test]
    fn lookup_returns_pmt_slot_for_tagged_region() {
        let (mut p, mut m) = setup();
        p.mmt.set_range(0x2000, 512, TagId(9));
        p.pmt_write(C0, TagId(9), b"payload").unwrap();
        let r = p
            .lookup(&mut m, C0, 0x2010, LookupMode::ForceStall, 0, identity)
            .unwrap();
        assert_eq!(r.tag, Some(TagId(9)));
        assert_eq!(&r.metadata.unwrap()[..7], b"payload");
    }

    #[test]
    fn untagged_lookup_has_no_metadata() {
        let (mut p, mut m) = setup();
        let r = p
            .lookup(&mut m, C0, 0x9000, LookupMode::ForceStall, 0, identity)
            .unwrap();
        assert_eq!(r.tag, Some(TagId::UNTAGGED));
        assert!(r.metadata.is_none());
    }

    #[test]
    fn unknown_client_is_an_error() {
        let (mut p, mut m) = setup();
        let err = p
            .lookup(
                &mut m,
                ClientId(9),
                0x1000,
                LookupMode::ForceStall,
                0,
                identity,
            )
            .unwrap_err();
        assert!(matches!(err, MetadataError::UnknownClient(ClientId(9))));
    }

    #[test]
    fn write_tag_range_posts_one_request_per_table_line() {
        let (mut p, mut m) = setup();
        // 64 regions per posted request: 100 regions -> lines 0 and 1
        let n = p.write_tag_range(&mut m, 0, 512 * 100, TagId(3), 0);
        assert_eq!(n, 100);
        assert_eq!(m.stats.mem_accesses, 2);
    }

    #[test]
    fn write_tag_range_invalidates_cached_regions() {
        let (mut p, mut m) = setup();
        p.mmt.set_range(0x1000, 512, TagId(5));
        p.lookup(&mut m, C0, 0x1000, LookupMode::ForceStall, 0, identity)
            .unwrap();
        p.write_tag_range(&mut m, 0x1000, 512, TagId(6), 200);
        let r = p
            .lookup(&mut m, C0, 0x1000, LookupMode::ForceStall, 500, identity)
            .unwrap();
        assert!(!r.mmc_hit, "stale entry must have been invalidated");
        assert_eq!(r.tag, Some(TagId(6)));
    }

    #[test]
    fn stats_balance_hits_misses_drops() {
        let (mut p, mut m) = setup();
        for i in 0..50u64 {
            let _ = p.lookup(
                &mut m,
                C0,
                i * 4096,
                LookupMode::BestEffort,
                i * 3,
                identity,
            );
        }
        let s = &m.stats;
        assert_eq!(s.mmc_hits + s.mmc_misses, s.lookups_issued - s.lookups_dropped);
    }
}
