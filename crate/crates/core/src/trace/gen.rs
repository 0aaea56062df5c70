//! Deterministic microbenchmark generators: the four locality-stress
//! patterns, plus the name-based registry the CLI and harness build
//! traces through.

use super::{Trace, TraceEvent};
use crate::error::TraceError;
use crate::isa::MetaOp;
use crate::types::{TagId, VAddr};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Data regions start here; leaves low memory for stacks/safety corpora
/// and stays well below the page-table shadow range and the tag table.
pub const DATA_BASE: VAddr = 0x10_0000;

const PAGE: u64 = 4096;

/// Sequential 4-byte-stride loads over a fresh array, visited once,
/// preceded by one MAP over it.
pub fn gen_stream(bytes: u64, elem: u64) -> Trace {
    assert!(bytes >= elem && elem >= 1);
    let mut t = Trace::new(
        "stream",
        0,
        vec![("bytes".into(), bytes), ("elem".into(), elem)],
    );
    t.events.push(TraceEvent::Meta(MetaOp::Map {
        tag: TagId(1),
        vstart: DATA_BASE,
        size: bytes,
    }));
    let n = bytes / elem;
    for i in 0..n {
        t.events.push(TraceEvent::load(DATA_BASE + i * elem, elem as u32));
    }
    t.seal_aspace(PAGE);
    t
}

/// Uniform random 4-byte loads over one mapped region: no reuse pattern,
/// no spatial locality.
pub fn gen_random(region_bytes: u64, accesses: u64, seed: u64) -> Trace {
    assert!(region_bytes >= 64);
    let mut t = Trace::new(
        "random",
        seed,
        vec![
            ("region_bytes".into(), region_bytes),
            ("accesses".into(), accesses),
        ],
    );
    t.events.push(TraceEvent::Meta(MetaOp::Map {
        tag: TagId(1),
        vstart: DATA_BASE,
        size: region_bytes,
    }));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slots = region_bytes / 4;
    for _ in 0..accesses {
        let i = rng.gen_range(0..slots);
        t.events.push(TraceEvent::load(DATA_BASE + i * 4, 4));
    }
    t.seal_aspace(PAGE);
    t
}

/// Pointer-chasing list: nodes scattered by a seeded shuffle of a pitched
/// pool (defeating spatial locality), built by creation and insertion
/// stores, then traversed by following the next-references in the image.
pub fn gen_linked_list(nodes: u64, traversals: u64, node_pitch: u64, seed: u64) -> Trace {
    assert!(nodes >= 2);
    let mut t = Trace::new(
        "linked_list",
        seed,
        vec![
            ("nodes".into(), nodes),
            ("traversals".into(), traversals),
            ("node_pitch".into(), node_pitch),
        ],
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slots: Vec<u64> = (0..nodes).collect();
    slots.shuffle(&mut rng);
    let addr_of = |k: u64| DATA_BASE + slots[k as usize] * node_pitch;

    // final chain: logical order, terminated by null
    for k in 0..nodes {
        let next = if k + 1 < nodes { addr_of(k + 1) } else { 0 };
        t.header.image.set(addr_of(k), next);
    }

    // creation: link every node that is not a late insertion
    let inserted = |k: u64| k != 0 && k % 8 == 4;
    for k in 0..nodes {
        if !inserted(k) {
            t.events.push(TraceEvent::store(addr_of(k), 8));
        }
    }
    // insertion: write the new node, patch its predecessor
    for k in 0..nodes {
        if inserted(k) {
            t.events.push(TraceEvent::store(addr_of(k), 8));
            t.events.push(TraceEvent::store(addr_of(k - 1), 8));
        }
    }
    // traversal: follow the image chain from the head
    for _ in 0..traversals {
        let mut a = addr_of(0);
        while a != 0 {
            t.events.push(TraceEvent::load(a, 8));
            a = t.header.image.value_at(a);
        }
    }
    t.seal_aspace(PAGE);
    t
}

/// Single pass over a 3D array laid out contiguously in the first
/// dimension, traversed third-dimension-first: address of (i,j,k) is
/// base + elem*(i + dx*j + dx*dy*k) and the inner loop walks k, so the
/// inner-loop stride is dx*dy*elem.
pub fn gen_3d_array(dx: u64, dy: u64, dz: u64, elem: u64) -> Trace {
    assert!(dx >= 1 && dy >= 1 && dz >= 1);
    let mut t = Trace::new(
        "array3d",
        0,
        vec![
            ("dx".into(), dx),
            ("dy".into(), dy),
            ("dz".into(), dz),
            ("elem".into(), elem),
        ],
    );
    for i in 0..dx {
        for j in 0..dy {
            for k in 0..dz {
                let a = DATA_BASE + elem * (i + dx * j + dx * dy * k);
                t.events.push(TraceEvent::load(a, elem as u32));
            }
        }
    }
    t.seal_aspace(PAGE);
    t
}

/// A generator invocation by name, as configs and the CLI express it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceSpec {
    pub generator: String,
    pub seed: u64,
    pub params: Vec<(String, u64)>,
}

impl TraceSpec {
    pub fn new(generator: &str, seed: u64) -> Self {
        TraceSpec {
            generator: generator.to_string(),
            seed,
            params: Vec::new(),
        }
    }

    pub fn with(mut self, name: &str, value: u64) -> Self {
        self.params.retain(|(n, _)| n != name);
        self.params.push((name.to_string(), value));
        self
    }

    fn get(&self, name: &str, default: u64) -> u64 {
        self.params
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, v)| v)
            .unwrap_or(default)
    }

    fn check_params(&self, allowed: &[&str]) -> Result<(), TraceError> {
        for (n, _) in &self.params {
            if !allowed.contains(&n.as_str()) {
                return Err(TraceError::Invalid(format!(
                    "generator {:?} has no parameter {n:?}",
                    self.generator
                )));
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Trace, TraceError> {
        match self.generator.as_str() {
            "stream" => {
                self.check_params(&["bytes", "elem"])?;
                Ok(gen_stream(self.get("bytes", 1 << 16), self.get("elem", 4)))
            }
            "random" => {
                self.check_params(&["region_bytes", "accesses"])?;
                Ok(gen_random(
                    self.get("region_bytes", 1 << 26),
                    self.get("accesses", 20_000),
                    self.seed,
                ))
            }
            "linked_list" => {
                self.check_params(&["nodes", "traversals", "node_pitch"])?;
                Ok(gen_linked_list(
                    self.get("nodes", 256),
                    self.get("traversals", 8),
                    self.get("node_pitch", 512),
                    self.seed,
                ))
            }
            "array3d" => {
                self.check_params(&["dx", "dy", "dz", "elem"])?;
                Ok(gen_3d_array(
                    self.get("dx", 16),
                    self.get("dy", 8),
                    self.get("dz", 16),
                    self.get("elem", 4),
                ))
            }
            "graph" => {
                self.check_params(&["vertices", "avg_degree"])?;
                Ok(super::graph::gen_graph_traversal(
                    self.get("vertices", 512),
                    self.get("avg_degree", 4),
                    self.seed,
                ))
            }
            "safety_bounds" => {
                self.check_params(&["accesses", "inject", "array_bytes"])?;
                Ok(super::safety::gen_safety_bounds(
                    self.get("accesses", 512),
                    self.get("inject", 0),
                    self.get("array_bytes", 4096),
                    self.seed,
                ))
            }
            "safety_rap" => {
                self.check_params(&["calls", "max_depth", "inject"])?;
                Ok(super::safety::gen_safety_rap(
                    self.get("calls", 256),
                    self.get("max_depth", 8),
                    self.get("inject", 0),
                    self.seed,
                ))
            }
            other => Err(TraceError::Invalid(format!("unknown generator {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::AccessKind;

    #[test]
    fn stream_emits_one_map_then_strided_loads() {
        let t = gen_stream(1 << 16, 4);
        assert_eq!(t.events.len(), 1 + 16384);
        assert!(matches!(t.events[0], TraceEvent::Meta(MetaOp::Map { .. })));
        match (&t.events[1], &t.events[2]) {
            (
                &TraceEvent::MemAccess { vaddr: a, .. },
                &TraceEvent::MemAccess { vaddr: b, .. },
            ) => assert_eq!(b - a, 4),
            _ => panic!("expected loads"),
        }
    }

    #[test]
    fn random_stays_inside_region_and_is_seed_deterministic() {
        let a = gen_random(1 << 20, 1000, 7);
        let b = gen_random(1 << 20, 1000, 7);
        assert_eq!(a, b);
        for e in &a.events[1..] {
            if let TraceEvent::MemAccess { vaddr, .. } = e {
                assert!(*vaddr >= DATA_BASE && *vaddr < DATA_BASE + (1 << 20));
            }
        }
        let c = gen_random(1 << 20, 1000, 8);
        assert_ne!(a, c, "different seed, different trace");
    }

    #[test]
    fn random_zero_accesses_is_map_only() {
        let t = gen_random(1 << 16, 0, 1);
        assert_eq!(t.events.len(), 1);
    }

    #[test]
    fn linked_list_traversal_follows_image_chain() {
        let t = gen_linked_list(40, 1, 512, 3);
        let loads: Vec<u64> = t
            .events
            .iter()
            .filter_map(|e| match e {
                &TraceEvent::MemAccess {
                    kind: AccessKind::Load,
                    vaddr,
                    ..
                } => Some(vaddr),
                _ => None,
            })
            .collect();
        assert_eq!(loads.len(), 40);
        // chain-following oracle: image's next reference gives each
        // successive load address
        for w in loads.windows(2) {
            assert_eq!(t.header.image.value_at(w[0]), w[1]);
        }
        assert_eq!(t.header.image.value_at(*loads.last().unwrap()), 0);
    }

    #[test]
    fn linked_list_stores_cover_all_nodes() {
        let t = gen_linked_list(64, 0, 512, 3);
        let stores = t
            .events
            .iter()
            .filter(|e| {
                matches!(
                    e,
                    TraceEvent::MemAccess {
                        kind: AccessKind::Store,
                        ..
                    }
                )
            })
            .count();
        // 64 nodes: 8 inserted late (one extra predecessor patch each)
        assert_eq!(stores, 64 + 8);
    }

    #[test]
    fn four_node_list_single_traversal() {
        let t = gen_linked_list(4, 1, 512, 5);
        let loads = t
            .events
            .iter()
            .filter(|e| {
                matches!(
                    e,
                    TraceEvent::MemAccess {
                        kind: AccessKind::Load,
                        ..
                    }
                )
            })
            .count();
        assert_eq!(loads, 4);
    }

    #[test]
    fn array3d_inner_stride_is_plane_size() {
        let t = gen_3d_array(2, 2, 2, 4);
        let addrs: Vec<u64> = t
            .events
            .iter()
            .map(|e| match e {
                &TraceEvent::MemAccess { vaddr, .. } => vaddr,
                _ => panic!(),
            })
            .collect();
        assert_eq!(addrs.len(), 8);
        // inner loop walks k: consecutive delta dx*dy*elem = 16
        assert_eq!(addrs[1] - addrs[0], 16);
        assert_eq!(addrs[3] - addrs[2], 16);
        // full address set is the whole 32-byte array
        let mut sorted = addrs.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..8).map(|i| DATA_BASE + i * 4).collect::<Vec<_>>());
    }

    #[test]
    fn spec_round_trips_params_and_rejects_unknown() {
        let spec = TraceSpec::new("stream", 0).with("bytes", 8192);
        let t = spec.build().unwrap();
        assert_eq!(t.param("bytes"), Some(8192));
        assert!(TraceSpec::new("stream", 0)
            .with("nodes", 4)
            .build()
            .is_err());
        assert!(TraceSpec::new("nope", 0).build().is_err());
    }

    #[test]
    fn generators_are_pure_functions_of_inputs() {
        let a = TraceSpec::new("linked_list", 42).with("nodes", 100).build();
        let b = TraceSpec::new("linked_list", 42).with("nodes", 100).build();
        assert_eq!(
            crate::trace::format::to_string(&a.unwrap()),
            crate::trace::format::to_string(&b.unwrap())
        );
    }
}
