//! Graph-traversal workload: a work list of vertex ids drives a CSR-style
//! walk through row pointers, edge targets and a property array. Every
//! hop is a data-dependent load, which is what makes the chained
//! prefetcher interesting. The generator also computes, by direct replay
//! of the address arithmetic, the exact prefetch addresses a perfect
//! (nothing-dropped) chained prefetcher would emit.

use super::{Trace, TraceEvent};
use crate::clients::prefetch::GraphPrefetchMeta;
use crate::isa::MetaOp;
use crate::types::{ClientId, TagId, VAddr};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const WORK_LIST_BASE: VAddr = 0x0200_0000;
pub const VERTEX_LIST_BASE: VAddr = 0x0240_0000;
pub const EDGE_LIST_BASE: VAddr = 0x0280_0000;
pub const PROPERTY_BASE: VAddr = 0x02C0_0000;

const ELEM: u64 = 4;
/// How far ahead of the current work-list item chains run.
pub const CHAIN_STRIDE: u64 = 1;

struct Arrays {
    wl: Vec<u64>,       // visit order: permutation of vertex ids
    row_ptr: Vec<u64>,  // vertices + 1 entries
    targets: Vec<u64>,  // edge destinations
}

fn build_graph(vertices: u64, avg_degree: u64, seed: u64) -> Arrays {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut wl: Vec<u64> = (0..vertices).collect();
    wl.shuffle(&mut rng);

    let mut row_ptr = Vec::with_capacity(vertices as usize + 1);
    let mut targets = Vec::new();
    row_ptr.push(0);
    for _ in 0..vertices {
        let deg = rng.gen_range(0..=2 * avg_degree);
        for _ in 0..deg {
            targets.push(rng.gen_range(0..vertices));
        }
        row_ptr.push(targets.len() as u64);
    }
    Arrays { wl, row_ptr, targets }
}

fn struct_meta(vertices: u64, edges: u64) -> [GraphPrefetchMeta; 4] {
    let wl = GraphPrefetchMeta {
        own_base: WORK_LIST_BASE,
        own_size: vertices * ELEM,
        elem_size: ELEM,
        stride: CHAIN_STRIDE,
        chain_root: true,
        next: Some((VERTEX_LIST_BASE, ELEM)),
    };
    let vl = GraphPrefetchMeta {
        own_base: VERTEX_LIST_BASE,
        own_size: (vertices + 1) * ELEM,
        elem_size: ELEM,
        stride: 1,
        chain_root: false,
        next: Some((EDGE_LIST_BASE, ELEM)),
    };
    let el = GraphPrefetchMeta {
        own_base: EDGE_LIST_BASE,
        own_size: edges.max(1) * ELEM,
        elem_size: ELEM,
        stride: 1,
        chain_root: false,
        next: Some((PROPERTY_BASE, ELEM)),
    };
    let prop = GraphPrefetchMeta {
        own_base: PROPERTY_BASE,
        own_size: vertices * ELEM,
        elem_size: ELEM,
        stride: 1,
        chain_root: false,
        next: None,
    };
    [wl, vl, el, prop]
}

/// Work-list-driven traversal over a random graph. Four tagged arrays,
/// CREATE+MAP preamble for each, then one pass over the work list reading
/// row pointers, edge targets and one property per edge.
pub fn gen_graph_traversal(vertices: u64, avg_degree: u64, seed: u64) -> Trace {
    assert!(vertices >= 2, "graph needs at least two vertices");
    let g = build_graph(vertices, avg_degree, seed);
    let edges = g.targets.len() as u64;
    let metas = struct_meta(vertices, edges);

    let mut t = Trace::new(
        "graph",
        seed,
        vec![
            ("vertices".into(), vertices),
            ("avg_degree".into(), avg_degree),
        ],
    );

    for (i, m) in metas.iter().enumerate() {
        let tag = TagId(i as u8 + 1);
        t.events.push(TraceEvent::Meta(MetaOp::Create {
            client: ClientId(0),
            tag,
            metadata: m.encode(),
        }));
        t.events.push(TraceEvent::Meta(MetaOp::Map {
            tag,
            vstart: m.own_base,
            size: m.own_size,
        }));
    }

    for (i, &v) in g.wl.iter().enumerate() {
        t.header.image.set(WORK_LIST_BASE + ELEM * i as u64, v);
    }
    for (v, &p) in g.row_ptr.iter().enumerate() {
        t.header.image.set(VERTEX_LIST_BASE + ELEM * v as u64, p);
    }
    for (e, &dst) in g.targets.iter().enumerate() {
        t.header.image.set(EDGE_LIST_BASE + ELEM * e as u64, dst);
    }

    for (i, &w) in g.wl.iter().enumerate() {
        t.events.push(TraceEvent::load(WORK_LIST_BASE + ELEM * i as u64, 4));
        t.events.push(TraceEvent::load(VERTEX_LIST_BASE + ELEM * w, 4));
        t.events.push(TraceEvent::load(VERTEX_LIST_BASE + ELEM * (w + 1), 4));
        for e in g.row_ptr[w as usize]..g.row_ptr[w as usize + 1] {
            let dst = g.targets[e as usize];
            t.events.push(TraceEvent::load(EDGE_LIST_BASE + ELEM * e, 4));
            t.events.push(TraceEvent::load(PROPERTY_BASE + ELEM * dst, 4));
        }
    }

    t.header.expected.oracle_prefetches = oracle_chain_walk(&t, vertices, edges);
    t.seal_aspace(4096);
    t
}

/// Replays the chain arithmetic over the demand sequence without going
/// through the metadata plane or the client: for each work-list load,
/// run ahead by the stride and follow value-dependent hops while each
/// computed address stays inside its structure.
fn oracle_chain_walk(t: &Trace, vertices: u64, edges: u64) -> Vec<VAddr> {
    let in_wl = |a: VAddr| a >= WORK_LIST_BASE && a < WORK_LIST_BASE + vertices * ELEM;
    let in_vl =
        |a: VAddr| a >= VERTEX_LIST_BASE && a < VERTEX_LIST_BASE + (vertices + 1) * ELEM;
    let in_el = |a: VAddr| a >= EDGE_LIST_BASE && a < EDGE_LIST_BASE + edges.max(1) * ELEM;
    let in_prop = |a: VAddr| a >= PROPERTY_BASE && a < PROPERTY_BASE + vertices * ELEM;

    let mut out = Vec::new();
    for ev in &t.events {
        let TraceEvent::MemAccess { vaddr, .. } = ev else { continue };
        if !in_wl(*vaddr) {
            continue;
        }
        let ahead = vaddr + CHAIN_STRIDE * ELEM;
        if !in_wl(ahead) {
            continue;
        }
        out.push(ahead);
        let a = VERTEX_LIST_BASE + ELEM * t.header.image.value_at(ahead);
        if !in_vl(a) {
            continue;
        }
        out.push(a);
        let a2 = EDGE_LIST_BASE + ELEM * t.header.image.value_at(a);
        if !in_el(a2) {
            continue;
        }
        out.push(a2);
        let a3 = PROPERTY_BASE + ELEM * t.header.image.value_at(a2);
        if in_prop(a3) {
            out.push(a3);
        }
    }
    out
}
