//! Workloads for the two protection clients: an array-bounds corpus where
//! each checked access arms an expected tag first, and a call/return
//! corpus where injected attacks overwrite live return-address slots.
//! Injected violations are labelled in-stream and recorded in the header
//! so detection can be scored exactly.

use super::{Trace, TraceEvent};
use crate::isa::MetaOp;
use crate::os::TrapKind;
use crate::types::{ClientId, TagId, VAddr};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BOUNDS_ARRAYS: usize = 3;
/// Gap between protected arrays; overflows land here, in untagged space.
const ARRAY_GAP: u64 = 65536;
const BOUNDS_BASE: VAddr = super::gen::DATA_BASE;

pub fn bounds_array_base(array_bytes: u64, k: usize) -> VAddr {
    BOUNDS_BASE + k as u64 * (array_bytes + ARRAY_GAP)
}

/// Three tagged arrays; every access is preceded by a CREATE arming the
/// tag the access is supposed to hit. `inject` of the accesses are made
/// to miss: half overflow past their array into untagged space, half land
/// in a differently-tagged array.
pub fn gen_safety_bounds(accesses: u64, inject: u64, array_bytes: u64, seed: u64) -> Trace {
    assert!(array_bytes >= 64 && array_bytes.is_multiple_of(2048));
    assert!(inject <= accesses);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Trace::new(
        "safety_bounds",
        seed,
        vec![
            ("accesses".into(), accesses),
            ("inject".into(), inject),
            ("array_bytes".into(), array_bytes),
        ],
    );

    for k in 0..BOUNDS_ARRAYS {
        t.events.push(TraceEvent::Meta(MetaOp::Map {
            tag: TagId(k as u8 + 1),
            vstart: bounds_array_base(array_bytes, k),
            size: array_bytes,
        }));
    }

    let bad: Vec<usize> = sample(&mut rng, accesses as usize, inject as usize).into_vec();
    for i in 0..accesses {
        let k = rng.gen_range(0..BOUNDS_ARRAYS);
        let armed = TagId(k as u8 + 1);
        t.events.push(TraceEvent::Meta(MetaOp::Create {
            client: ClientId(0),
            tag: armed,
            metadata: vec![],
        }));

        let violate = bad.contains(&(i as usize));
        let addr = if !violate {
            bounds_array_base(array_bytes, k) + rng.gen_range(0..array_bytes / 4) * 4
        } else if rng.gen_bool(0.5) {
            // overflow past the end, into the untagged gap
            bounds_array_base(array_bytes, k) + array_bytes + rng.gen_range(0..256) * 4
        } else {
            // land inside a different array: right address space, wrong tag
            let other = (k + 1 + rng.gen_range(0..BOUNDS_ARRAYS - 1)) % BOUNDS_ARRAYS;
            bounds_array_base(array_bytes, other) + rng.gen_range(0..array_bytes / 4) * 4
        };

        if violate {
            t.events.push(TraceEvent::Label {
                kind: TrapKind::BoundsViolation,
            });
            t.header
                .expected
                .violations
                .push((t.events.len() as u64, TrapKind::BoundsViolation));
        }
        let ev = if rng.gen_bool(0.25) {
            TraceEvent::store(addr, 4)
        } else {
            TraceEvent::load(addr, 4)
        };
        t.events.push(ev);
    }

    t.header
        .expected
        .violations
        .sort_unstable_by_key(|&(p, _)| p);
    t.seal_aspace(4096);
    t
}

pub const STACK_BASE: VAddr = 0x0700_0000;
pub const FRAME_BYTES: u64 = 1024;
/// Locals live in the upper half of the frame, well away from the slot
/// the return address occupies at the frame base.
const LOCALS_OFF: u64 = 512;

fn frame_base(depth: u64) -> VAddr {
    STACK_BASE - depth * FRAME_BYTES
}

/// Nested call/return activity with local traffic in every frame.
/// `inject` of the calls smuggle in an explicit store to the live
/// return-address slot.
pub fn gen_safety_rap(calls: u64, max_depth: u64, inject: u64, seed: u64) -> Trace {
    assert!(max_depth >= 1 && calls >= 1 && inject <= calls);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Trace::new(
        "safety_rap",
        seed,
        vec![
            ("calls".into(), calls),
            ("max_depth".into(), max_depth),
            ("inject".into(), inject),
        ],
    );

    let bad: Vec<usize> = sample(&mut rng, calls as usize, inject as usize).into_vec();
    let mut depth: u64 = 0;
    let mut made: u64 = 0;
    while made < calls || depth > 0 {
        let call_next = made < calls && (depth == 0 || (depth < max_depth && rng.gen_bool(0.55)));
        if call_next {
            depth += 1;
            let fb = frame_base(depth);
            t.events.push(TraceEvent::Call { ret_slot: fb });
            for i in 0..rng.gen_range(2..=4u64) {
                let local = fb + LOCALS_OFF + 8 * i;
                if rng.gen_bool(0.5) {
                    t.events.push(TraceEvent::store(local, 8));
                } else {
                    t.events.push(TraceEvent::load(local, 8));
                }
            }
            if bad.contains(&(made as usize)) {
                t.events.push(TraceEvent::Label {
                    kind: TrapKind::ReturnAddressOverwrite,
                });
                t.header
                    .expected
                    .violations
                    .push((t.events.len() as u64, TrapKind::ReturnAddressOverwrite));
                t.events.push(TraceEvent::store(fb, 8));
            }
            made += 1;
        } else {
            let fb = frame_base(depth);
            t.events.push(TraceEvent::Return { ret_slot: fb });
            depth -= 1;
        }
    }

    t.seal_aspace(4096);
    t
}
