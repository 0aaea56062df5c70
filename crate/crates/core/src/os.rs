//! The OS-visible side of the system: page mapping, tag-table allocation,
//! context-switch hygiene, page-migration consistency, and trap records.

use crate::error::ConfigError;
use crate::machine::Machine;
use crate::metadata::{MetadataPlane, Mmt};
use crate::types::{Cycle, PAddr, VAddr};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Virtual→physical page table. Pages are identity-mapped until remapped,
/// which keeps generated traces position-independent; the tag table's home
/// range at the top of physical memory is never handed to the process.
#[derive(Debug, Clone)]
pub struct PageMap {
    page_bytes: u64,
    phys_pages: u64,
    reserved_start: PAddr,
    overrides: HashMap<u64, u64>,
}

impl PageMap {
    pub fn new(page_bytes: u64, phys_mem_bytes: u64, reserved_start: PAddr) -> Self {
        assert!(page_bytes.is_power_of_two());
        PageMap {
            page_bytes,
            phys_pages: phys_mem_bytes / page_bytes,
            reserved_start,
            overrides: HashMap::new(),
        }
    }

    pub fn page_bytes(&self) -> u64 {
        self.page_bytes
    }

    pub fn translate_page(&self, vpn: u64) -> Option<u64> {
        let ppn = *self.overrides.get(&vpn).unwrap_or(&vpn);
        let pa = ppn * self.page_bytes;
        (ppn < self.phys_pages && pa < self.reserved_start).then_some(ppn)
    }

    pub fn translate(&self, vaddr: VAddr) -> Option<PAddr> {
        let ppn = self.translate_page(vaddr / self.page_bytes)?;
        Some(ppn * self.page_bytes + vaddr % self.page_bytes)
    }

    fn set_mapping(&mut self, vpn: u64, ppn: u64) {
        if ppn == vpn {
            self.overrides.remove(&vpn);
        } else {
            self.overrides.insert(vpn, ppn);
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProcessContext {
    pub page_map: PageMap,
    pub mmt_base: PAddr,
    pub live: bool,
}

impl ProcessContext {
    pub fn new(page_bytes: u64, phys_mem_bytes: u64, mmt_base: PAddr) -> Self {
        ProcessContext {
            page_map: PageMap::new(page_bytes, phys_mem_bytes, mmt_base),
            mmt_base,
            live: true,
        }
    }
}

/// Place the tag table at the top of physical memory, page-aligned, and
/// hand back both the table and its base.
pub fn allocate_mmt(
    phys_mem_bytes: u64,
    granularity_bytes: u64,
    page_bytes: u64,
) -> Result<(Mmt, PAddr), ConfigError> {
    if granularity_bytes > phys_mem_bytes {
        return Err(ConfigError::new(format!(
            "granularity {granularity_bytes} exceeds physical memory {phys_mem_bytes}"
        )));
    }
    let footprint = phys_mem_bytes / granularity_bytes;
    let base = (phys_mem_bytes - footprint) / page_bytes * page_bytes;
    Ok((Mmt::new(base, phys_mem_bytes, granularity_bytes), base))
}

/// Flush everything that is private to the outgoing process: PMT contents,
/// TLB entries, and (configurably) the MMC, whose physical mappings may no
/// longer be meaningful. Charges a fixed cost to the core.
pub fn context_switch(
    machine: &mut Machine,
    plane: &mut MetadataPlane,
    cost_cycles: u64,
    flush_mmc: bool,
) {
    plane.flush_pmts();
    machine.tlb.flush();
    if flush_mmc {
        plane.mmc.flush();
    }
    machine.now += cost_cycles;
}

/// Migrate one virtual page to a new physical frame: copy the old frame's
/// tags to the new frame's table entries, zero the old ones, invalidate
/// every affected MMC entry, and update the page table and TLB. Returns
/// how many tagged regions were migrated.
pub fn remap_page(
    ctx: &mut ProcessContext,
    machine: &mut Machine,
    plane: &mut MetadataPlane,
    vpn: u64,
    new_ppn: u64,
) -> Result<u64, ConfigError> {
    let old_ppn = ctx
        .page_map
        .translate_page(vpn)
        .ok_or_else(|| ConfigError::new(format!("remap of unmapped vpn {vpn:#x}")))?;
    let page = ctx.page_map.page_bytes();
    let gran = plane.mmt.granularity_bytes();
    assert!(gran <= page, "region larger than a page cannot migrate");
    let per_page = page / gran;

    let old_first = plane.mmt.region_of(old_ppn * page);
    let new_first = plane.mmt.region_of(new_ppn * page);
    let mut migrated = 0;
    for i in 0..per_page {
        let tag = plane.mmt.tag_of_region(old_first + i);
        if !tag.is_untagged() {
            plane
                .mmt
                .set_range(new_ppn * page + i * gran, gran, tag);
            migrated += 1;
        }
        plane.mmt.set_range(old_ppn * page + i * gran, gran, Default::default());
        plane.mmc.invalidate(old_first + i);
        plane.mmc.invalidate(new_first + i);
    }

    ctx.page_map.set_mapping(vpn, new_ppn);
    machine.tlb.invalidate_page(vpn * page);
    Ok(migrated)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrapKind {
    BoundsViolation,
    ReturnAddressOverwrite,
}

impl std::fmt::Display for TrapKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrapKind::BoundsViolation => write!(f, "bounds_violation"),
            TrapKind::ReturnAddressOverwrite => write!(f, "return_address_overwrite"),
        }
    }
}

/// One delivered trap, kept in the run's trap log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrapRecord {
    pub kind: TrapKind,
    pub vaddr: VAddr,
    /// Trace position (event index) of the faulting access.
    pub position: u64,
    /// Whether the generator labeled this position as an injected violation.
    pub expected: bool,
    pub at_cycle: Cycle,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::MachineConfig;
    use crate::metadata::{LookupMode, MmcMode, PlaneParams, TranslationMode};
    use crate::types::{ClientId, TagId};

    const C0: ClientId = ClientId(0);
    const PHYS: u64 = 1 << 28;

    fn setup() -> (ProcessContext, Machine, MetadataPlane) {
        let (_, base) = allocate_mmt(PHYS, 512, 4096).unwrap();
        let params = PlaneParams {
            mmt_base_paddr: base,
            phys_mem_bytes: PHYS,
            granularity_bytes: 512,
            mmc_entries: 128,
            mmc_hit_cycles: 1,
            mmc_mode: MmcMode::Shared,
            sticky_client: None,
            translation_mode: TranslationMode::Physical,
            pmt_entry_bytes: 64,
            mmt_line_regions: 64,
        };
        (
            ProcessContext::new(4096, PHYS, base),
            Machine::new(&MachineConfig::default(), 5),
            MetadataPlane::new(&params, &[C0], 5),
        )
    }

    #[test]
    fn mmt_sits_at_top_of_memory() {
        let (mmt, base) = allocate_mmt(8 << 30, 512, 4096).unwrap();
        assert_eq!(mmt.footprint_bytes(), 16 << 20);
        assert!(base + mmt.footprint_bytes() <= 8 << 30);
        assert_eq!(base % 4096, 0);
        assert!(allocate_mmt(1 << 20, 512, 4096).unwrap().0.regions() == 2048);
        assert!(allocate_mmt(1 << 20, 64, 4096).unwrap().0.regions() == 16384);
        assert!(allocate_mmt(512, 1024, 4096).is_err());
    }

    #[test]
    fn identity_mapping_excludes_reserved_range() {
        let (ctx, ..) = setup();
        assert_eq!(ctx.page_map.translate(0x1234), Some(0x1234));
        assert_eq!(ctx.page_map.translate(ctx.mmt_base + 1), None);
        assert_eq!(ctx.page_map.translate(PHYS + 4096), None);
    }

    #[test]
    fn context_switch_flushes_private_state() {
        let (_ctx, mut m, mut p) = setup();
        p.pmt_write(C0, TagId(4), b"x").unwrap();
        m.tlb.insert(0x1000, 0x1000);
        p.mmt.set_range(0x1000, 512, TagId(4));
        p.lookup(&mut m, C0, 0x1000, LookupMode::ForceStall, 0, Some)
            .unwrap();
        let t0 = m.now;

        context_switch(&mut m, &mut p, 1000, true);
        assert_eq!(m.now - t0, 1000);
        assert!(p.pmt_read(C0, TagId(4)).unwrap().iter().all(|&b| b == 0));
        assert!(m.tlb.lookup(0x1000).is_none());
        let at = m.now;
        let r = p
            .lookup(&mut m, C0, 0x1000, LookupMode::ForceStall, at, Some)
            .unwrap();
        assert!(!r.mmc_hit, "MMC must be cold after the switch");
    }

    #[test]
    fn remap_preserves_tags_seen_through_virtual_addresses() {
        let (mut ctx, mut m, mut p) = setup();
        let va = 0x4000u64;
        let pa = ctx.page_map.translate(va).unwrap();
        p.mmt.set_range(pa, 4096, TagId(3));

        let migrated = remap_page(&mut ctx, &mut m, &mut p, va / 4096, 0x900).unwrap();
        assert_eq!(migrated, 8, "4 KB page = 8 regions at 512 B");

        let pa2 = ctx.page_map.translate(va).unwrap();
        assert_eq!(pa2, 0x900 * 4096);
        let r = p
            .lookup(&mut m, C0, pa2, LookupMode::ForceStall, 0, Some)
            .unwrap();
        assert_eq!(r.tag, Some(TagId(3)));
        // old frame reads untagged now
        let r_old = p
            .lookup(&mut m, C0, pa, LookupMode::ForceStall, 200, Some)
            .unwrap();
        assert_eq!(r_old.tag, Some(TagId(0)));
    }

    #[test]
    fn remap_untagged_page_migrates_nothing() {
        let (mut ctx, mut m, mut p) = setup();
        let migrated = remap_page(&mut ctx, &mut m, &mut p, 0x40, 0x800).unwrap();
        assert_eq!(migrated, 0);
    }

    #[test]
    fn stale_mmc_entry_cannot_survive_remap() {
        let (mut ctx, mut m, mut p) = setup();
        let va = 0x4000u64;
        let pa = ctx.page_map.translate(va).unwrap();
        p.mmt.set_range(pa, 512, TagId(7));
        p.lookup(&mut m, C0, pa, LookupMode::ForceStall, 0, Some)
            .unwrap(); // cache it
        remap_page(&mut ctx, &mut m, &mut p, va / 4096, 0x901).unwrap();
        let pa2 = ctx.page_map.translate(va).unwrap();
        let r = p
            .lookup(&mut m, C0, pa2, LookupMode::ForceStall, 300, Some)
            .unwrap();
        assert!(!r.mmc_hit);
        assert_eq!(r.tag, Some(TagId(7)));
    }

    #[test]
    fn remap_of_unmapped_vpn_errors() {
        let (mut ctx, mut m, mut p) = setup();
        let bad_vpn = PHYS / 4096 + 10;
        assert!(remap_page(&mut ctx, &mut m, &mut p, bad_vpn, 0x800).is_err());
    }
}
