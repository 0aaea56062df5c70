//! Randomized invariants: serialization identity, corruption detection,
//! payload codecs, the tag-write algebra, lookup bookkeeping, and the
//! store-permission model behind return-address protection.

use metasim_core::clients::prefetch::GraphPrefetchMeta;
use metasim_core::error::TraceError;
use metasim_core::isa::MetaOp;
use metasim_core::machine::{Machine, MachineConfig};
use metasim_core::metadata::{LookupMode, MetadataPlane, Mmt, MmcMode, PlaneParams, TranslationMode};
use metasim_core::os::{allocate_mmt, context_switch, remap_page, ProcessContext, TrapKind};
use metasim_core::trace::format::{from_str, to_string};
use metasim_core::trace::{AccessKind, Trace, TraceEvent};
use metasim_core::types::{ClientId, TagId};
use proptest::prelude::*;

fn arb_trap_kind() -> impl Strategy<Value = TrapKind> {
    prop_oneof![
        Just(TrapKind::BoundsViolation),
        Just(TrapKind::ReturnAddressOverwrite),
    ]
}

fn arb_meta_op() -> impl Strategy<Value = MetaOp> {
    let addr = 0u64..1 << 40;
    prop_oneof![
        (0u8..8, any::<u8>(), prop::collection::vec(any::<u8>(), 0..64)).prop_map(
            |(c, t, m)| MetaOp::Create {
                client: ClientId(c),
                tag: TagId(t),
                metadata: m,
            }
        ),
        (any::<u8>(), addr.clone(), 1u64..1 << 20).prop_map(|(t, v, s)| MetaOp::Map {
            tag: TagId(t),
            vstart: v,
            size: s,
        }),
        (addr.clone(), 1u64..1 << 20).prop_map(|(v, s)| MetaOp::Unmap { vstart: v, size: s }),
        (any::<u8>(), addr.clone(), 1u64..64, 1u64..4096, 1u64..256).prop_map(
            |(t, v, lx, sx, sy)| MetaOp::Map2D {
                tag: TagId(t),
                vstart: v,
                len_x: lx,
                size_x: sx,
                size_y: sy,
            }
        ),
        (addr.clone(), 1u64..64, 1u64..4096, 1u64..256).prop_map(|(v, lx, sx, sy)| {
            MetaOp::Unmap2D {
                vstart: v,
                len_x: lx,
                size_x: sx,
                size_y: sy,
            }
        }),
        (any::<u8>(), addr.clone(), 1u64..16, 1u64..16, 1u64..512, 1u64..64, 1u64..64).prop_map(
            |(t, v, lx, ly, sx, sy, sz)| MetaOp::Map3D {
                tag: TagId(t),
                vstart: v,
                len_x: lx,
                len_y: ly,
                size_x: sx,
                size_y: sy,
                size_z: sz,
            }
        ),
        (addr, 1u64..16, 1u64..16, 1u64..512, 1u64..64, 1u64..64).prop_map(
            |(v, lx, ly, sx, sy, sz)| MetaOp::Unmap3D {
                vstart: v,
                len_x: lx,
                len_y: ly,
                size_x: sx,
                size_y: sy,
                size_z: sz,
            }
        ),
    ]
}

fn arb_event() -> impl Strategy<Value = TraceEvent> {
    let addr = 0u64..1 << 40;
    prop_oneof![
        (
            prop_oneof![Just(AccessKind::Load), Just(AccessKind::Store)],
            addr.clone(),
            prop::sample::select(vec![1u32, 2, 4, 8])
        )
            .prop_map(|(kind, vaddr, size_bytes)| TraceEvent::MemAccess {
                kind,
                vaddr,
                size_bytes,
            }),
        addr.clone().prop_map(|ret_slot| TraceEvent::Call { ret_slot }),
        addr.prop_map(|ret_slot| TraceEvent::Return { ret_slot }),
        (1u64..10_000).prop_map(|n| TraceEvent::ComputeCycles { n }),
        arb_trap_kind().prop_map(|kind| TraceEvent::Label { kind }),
        arb_meta_op().prop_map(TraceEvent::Meta),
    ]
}

// Names stay short so no generated token can collide with the "checksum"
// trailer keyword the parser anchors on.
fn arb_trace() -> impl Strategy<Value = Trace> {
    (
        "[a-z_]{1,6}",
        any::<u64>(),
        prop::collection::vec(("[a-z]{1,6}", any::<u64>()), 0..4),
        prop::collection::vec((0u64..1 << 40, any::<u64>()), 0..8),
        prop::collection::vec((any::<u64>(), arb_trap_kind()), 0..4),
        prop::collection::vec(0u64..1 << 40, 0..8),
        prop::collection::vec(arb_event(), 0..40),
        0u64..1 << 41,
    )
        .prop_map(
            |(generator, seed, params, image, violations, prefetches, events, aspace)| {
                let mut t = Trace::new(&generator, seed, params);
                for (a, v) in image {
                    t.header.image.set(a, v);
                }
                t.header.expected.violations = violations;
                t.header.expected.oracle_prefetches = prefetches;
                t.header.aspace_bytes = aspace;
                t.events = events;
                t
            },
        )
}

proptest! {
    /// Serialize→parse is the identity for any representable trace.
    #[test]
    fn trace_text_round_trip(t in arb_trace()) {
        let back = from_str(&to_string(&t)).unwrap();
        prop_assert_eq!(back, t);
    }

    /// Any single corrupted byte is detected: the FNV step is a bijection
    /// of the running state, so no one-byte change can keep the trailer.
    #[test]
    fn trace_single_byte_corruption_is_detected(
        t in arb_trace(),
        pos_frac in 0.0f64..1.0,
        replacement in prop::sample::select("abcdefghij0123456789".as_bytes().to_vec()),
    ) {
        let s = to_string(&t);
        let mut bytes = s.into_bytes();
        let pos = ((bytes.len() - 1) as f64 * pos_frac) as usize;
        prop_assume!(bytes[pos] != replacement);
        bytes[pos] = replacement;
        let corrupted = String::from_utf8(bytes).unwrap();
        prop_assert!(
            from_str(&corrupted).is_err(),
            "byte {} flip went unnoticed", pos
        );
    }

    /// Parse failures never panic and unparseable text is never accepted.
    #[test]
    fn arbitrary_text_never_parses_as_a_trace(s in "\\PC{0,200}") {
        prop_assume!(!s.starts_with("metasim-trace"));
        match from_str(&s) {
            Err(TraceError::Invalid(_) | TraceError::Parse { .. } | TraceError::Integrity { .. }) => {}
            Err(other) => prop_assert!(false, "unexpected error class: {other}"),
            Ok(_) => prop_assert!(false, "garbage accepted"),
        }
    }

    /// The packed prefetch payload survives its PMT round trip.
    #[test]
    fn prefetch_meta_round_trip(
        own_base in 0u64..1 << 40,
        own_size in 1u64..1 << 40,
        elem_size in prop::sample::select(vec![1u64, 2, 4, 8]),
        stride in 1u64..=255,
        chain_root in any::<bool>(),
        next in prop::option::of((0u64..1 << 40, prop::sample::select(vec![1u64, 2, 4, 8]))),
    ) {
        let m = GraphPrefetchMeta { own_base, own_size, elem_size, stride, chain_root, next };
        let bytes = m.encode();
        prop_assert_eq!(bytes.len(), GraphPrefetchMeta::ENCODED_LEN);
        prop_assert_eq!(GraphPrefetchMeta::decode(&bytes), Some(m));
    }

    /// Range writes against the table agree with a byte shadow that paints
    /// whole regions, for every granularity.
    #[test]
    fn tag_writes_match_byte_shadow(
        gran in prop::sample::select(vec![64u64, 128, 256, 512, 1024]),
        ops in prop::collection::vec((0u64..1 << 18, 1u64..8192, any::<u8>()), 1..40),
    ) {
        const SPACE: u64 = 1 << 18;
        let mut mmt = Mmt::new(SPACE, SPACE, gran);
        let mut shadow = vec![0u8; SPACE as usize];
        for (start, len, tag) in ops {
            let len = len.min(SPACE - start);
            if len == 0 {
                continue;
            }
            mmt.set_range(start, len, TagId(tag));
            let lo = start / gran * gran;
            let hi = ((start + len - 1) / gran + 1) * gran;
            for b in shadow[lo as usize..hi as usize].iter_mut() {
                *b = tag;
            }
        }
        for r in 0..SPACE / gran {
            prop_assert_eq!(
                mmt.tag_of_region(r).0,
                shadow[(r * gran) as usize],
                "region {} disagrees at granularity {}", r, gran
            );
        }
    }

    /// Every resolved lookup is a hit or a miss; every dropped one is
    /// neither. Holds across modes, interleavings, and concurrent writes.
    #[test]
    fn lookup_bookkeeping_balances(
        ops in prop::collection::vec(
            (0u64..1 << 20, 0u32..4, 1u64..200),
            1..120,
        ),
    ) {
        let params = PlaneParams {
            mmt_base_paddr: 1 << 20,
            phys_mem_bytes: 1 << 21,
            granularity_bytes: 512,
            mmc_entries: 16,
            mmc_hit_cycles: 1,
            mmc_mode: MmcMode::Shared,
            sticky_client: None,
            translation_mode: TranslationMode::Virtual,
            pmt_entry_bytes: 64,
            mmt_line_regions: 64,
        };
        let c0 = ClientId(0);
        let mut plane = MetadataPlane::new(&params, &[c0], 7);
        let mut machine = Machine::new(&MachineConfig::default(), 7);
        let mut t = 0u64;
        for (addr, op, gap) in ops {
            t += gap;
            match op {
                0 => {
                    plane.lookup(&mut machine, c0, addr, LookupMode::ForceStall, t, Some).unwrap();
                }
                1 => {
                    plane.lookup(&mut machine, c0, addr, LookupMode::NoStall, t, Some).unwrap();
                }
                2 => {
                    plane.lookup(&mut machine, c0, addr, LookupMode::BestEffort, t, Some).unwrap();
                }
                _ => {
                    plane.write_tag_range(&mut machine, addr, 64, TagId((addr % 255) as u8 + 1), t);
                }
            }
            let s = &machine.stats;
            prop_assert_eq!(
                s.mmc_hits + s.mmc_misses,
                s.lookups_issued - s.lookups_dropped
            );
        }
    }

    /// Store permission for return-address protection: an address reads
    /// tag 1 exactly while a live return slot owns its 64-byte region.
    #[test]
    fn rap_tagging_tracks_live_slot_set(
        ops in prop::collection::vec((any::<bool>(), 0u64..256), 1..80),
    ) {
        let params = PlaneParams {
            mmt_base_paddr: 1 << 20,
            phys_mem_bytes: 1 << 21,
            granularity_bytes: 64,
            mmc_entries: 128,
            mmc_hit_cycles: 1,
            mmc_mode: MmcMode::Shared,
            sticky_client: None,
            translation_mode: TranslationMode::Physical,
            pmt_entry_bytes: 64,
            mmt_line_regions: 64,
        };
        let c0 = ClientId(0);
        let rap = TagId(1);
        let mut plane = MetadataPlane::new(&params, &[c0], 11);
        let mut machine = Machine::new(&MachineConfig::default(), 11);
        let mut stack: Vec<u64> = Vec::new();
        let mut t = 0u64;
        for (push, pick) in ops {
            t += 500;
            if push {
                // next frame's return slot: 64-aligned, one per region
                let slot = (stack.len() as u64 + 1) * 64;
                plane.write_tag_range(&mut machine, slot, 8, rap, t);
                stack.push(slot);
            } else if let Some(slot) = stack.pop() {
                plane.write_tag_range(&mut machine, slot, 8, TagId::UNTAGGED, t);
            }
            // probe an arbitrary address in the slot arena
            let addr = pick * 17 % (64 * 80);
            let live = stack.contains(&(addr / 64 * 64));
            let got = plane
                .lookup(&mut machine, c0, addr, LookupMode::ForceStall, t + 100, Some)
                .unwrap()
                .tag
                .unwrap();
            prop_assert_eq!(
                got == rap,
                live,
                "addr {:#x}: tag {:?} vs live-slot set {:?}", addr, got, stack
            );
        }
    }

    /// The table always costs 1/granularity of memory, page-aligned at the top.
    #[test]
    fn mmt_allocation_sizing(
        phys_shift in 24u32..34,
        gran_shift in 6u32..13,
    ) {
        let phys = 1u64 << phys_shift;
        let gran = 1u64 << gran_shift;
        let (mmt, base) = allocate_mmt(phys, gran, 4096).unwrap();
        prop_assert_eq!(mmt.footprint_bytes(), phys / gran);
        prop_assert_eq!(base % 4096, 0);
        prop_assert!(base + mmt.footprint_bytes() <= phys);
        prop_assert!(phys - base - mmt.footprint_bytes() < 4096);
    }

    /// Page migration is invisible through virtual addresses: however many
    /// remaps are interposed, a lookup at a virtual address keeps returning
    /// the tag its page was given.
    #[test]
    fn remap_is_transparent_to_virtual_lookups(
        ops in prop::collection::vec((any::<bool>(), 0u64..8, 0u64..4096), 1..60),
    ) {
        const PAGE: u64 = 4096;
        const PHYS: u64 = 1 << 20; // 256 pages; table reserved at the top
        let (_, base) = allocate_mmt(PHYS, 512, PAGE).unwrap();
        let params = PlaneParams {
            mmt_base_paddr: base,
            phys_mem_bytes: PHYS,
            granularity_bytes: 512,
            mmc_entries: 32,
            mmc_hit_cycles: 1,
            mmc_mode: MmcMode::Shared,
            sticky_client: None,
            translation_mode: TranslationMode::Physical,
            pmt_entry_bytes: 64,
            mmt_line_regions: 64,
        };
        let c0 = ClientId(0);
        let mut plane = MetadataPlane::new(&params, &[c0], 13);
        let mut machine = Machine::new(&MachineConfig::default(), 13);
        let mut ctx = ProcessContext::new(PAGE, PHYS, base);

        // pages 16..24 are the arena; page i carries tag i+1 everywhere
        for vpn in 16u64..24 {
            let pa = ctx.page_map.translate(vpn * PAGE).unwrap();
            plane.write_tag_range(&mut machine, pa, PAGE, TagId((vpn - 15) as u8), 0);
        }
        let mut next_free_ppn = 32u64;
        let mut t = 1000u64;
        for (do_remap, page_pick, offset) in ops {
            t += 700;
            let vpn = 16 + page_pick;
            if do_remap && next_free_ppn < 200 {
                remap_page(&mut ctx, &mut machine, &mut plane, vpn, next_free_ppn).unwrap();
                next_free_ppn += 1;
            }
            let va = vpn * PAGE + offset;
            let pa = ctx.page_map.translate(va).unwrap();
            let got = plane
                .lookup(&mut machine, c0, pa, LookupMode::ForceStall, t, Some)
                .unwrap()
                .tag
                .unwrap();
            prop_assert_eq!(
                got,
                TagId((vpn - 15) as u8),
                "page {} lost its tag after migration", vpn
            );
        }
    }
}

/// Two processes share the hardware; a context switch between them must
/// leave nothing the second can read: PMT payloads, armed tags, warm TLB
/// and MMC entries all go.
#[test]
fn context_switch_isolates_the_next_process() {
    const PAGE: u64 = 4096;
    const PHYS: u64 = 1 << 22;
    let (_, base) = allocate_mmt(PHYS, 512, PAGE).unwrap();
    let params = PlaneParams {
        mmt_base_paddr: base,
        phys_mem_bytes: PHYS,
        granularity_bytes: 512,
        mmc_entries: 64,
        mmc_hit_cycles: 1,
        mmc_mode: MmcMode::Shared,
        sticky_client: None,
        translation_mode: TranslationMode::Physical,
        pmt_entry_bytes: 64,
        mmt_line_regions: 64,
    };
    let c0 = ClientId(0);
    let mut plane = MetadataPlane::new(&params, &[c0], 17);
    let mut machine = Machine::new(&MachineConfig::default(), 17);
    let ctx_a = ProcessContext::new(PAGE, PHYS, base);

    // Process A tags a buffer, stores a secret payload for it, and runs
    // far enough that its mappings are warm everywhere.
    let va = 0x8000u64;
    let pa = ctx_a.page_map.translate(va).unwrap();
    plane.pmt_write(c0, TagId(5), b"process-a-secret").unwrap();
    plane.arm(c0, TagId(5)).unwrap();
    plane.write_tag_range(&mut machine, pa, 512, TagId(5), 0);
    machine.tlb.insert(va, pa);
    let r = plane
        .lookup(&mut machine, c0, pa, LookupMode::ForceStall, 100, Some)
        .unwrap();
    assert_eq!(&r.metadata.unwrap()[..16], b"process-a-secret");

    let before = machine.now;
    context_switch(&mut machine, &mut plane, 1000, true);
    assert_eq!(machine.now - before, 1000);

    // Process B probes the same physical region A used. The tag itself is
    // physical state and may persist, but A's payload, armed tag, and warm
    // lookup state must not.
    let _ctx_b = ProcessContext::new(PAGE, PHYS, base);
    assert!(plane.peek_armed(c0).is_none(), "armed tag leaked");
    assert!(machine.tlb.lookup(va).is_none(), "TLB entry leaked");
    let at = machine.now;
    let r = plane
        .lookup(&mut machine, c0, pa, LookupMode::ForceStall, at, Some)
        .unwrap();
    assert!(!r.mmc_hit, "MMC entry leaked across the switch");
    let leaked = r.metadata.unwrap_or_default();
    assert!(
        leaked.iter().all(|&b| b == 0),
        "PMT payload leaked: {leaked:?}"
    );
}
