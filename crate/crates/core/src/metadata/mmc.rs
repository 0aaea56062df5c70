//! Metadata mapping cache: small fully associative region→tag cache with
//! NMRU replacement and optional contention-mitigation modes.

use crate::types::{ClientId, TagId};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MmcMode {
    /// All clients share the whole array.
    Shared,
    /// Equal slice of the array per registered client; fills stay inside
    /// the filling client's slice.
    Partitioned,
    /// Shared array, but entries filled by the designated client are
    /// evicted only when no other victim exists.
    Prioritized,
}

#[derive(Debug, Clone, Default)]
struct MmcEntry {
    valid: bool,
    region: u64,
    tag: TagId,
    recency: u64,
    owner: ClientId,
    sticky: bool,
}

#[derive(Debug, Clone)]
pub struct Mmc {
    entries: Vec<MmcEntry>,
    mode: MmcMode,
    /// slice bounds per client, in partitioned mode
    partitions: HashMap<ClientId, (usize, usize)>,
    index: HashMap<u64, usize>,
    tick: u64,
    mru: Option<usize>,
}

impl Mmc {
    pub fn new(entries: usize, mode: MmcMode, clients: &[ClientId]) -> Self {
        assert!(entries >= 1);
        let mut partitions = HashMap::new();
        if mode == MmcMode::Partitioned {
            assert!(!clients.is_empty(), "partitioned mode needs clients");
            let share = entries / clients.len();
            assert!(share >= 1, "more clients than entries");
            for (i, &c) in clients.iter().enumerate() {
                let end = if i + 1 == clients.len() {
                    entries
                } else {
                    (i + 1) * share
                };
                partitions.insert(c, (i * share, end));
            }
        }
        Mmc {
            entries: vec![MmcEntry::default(); entries],
            mode,
            partitions,
            index: HashMap::new(),
            tick: 0,
            mru: None,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Probe only — no state change.
    pub fn probe(&self, region: u64) -> Option<TagId> {
        self.index.get(&region).map(|&i| self.entries[i].tag)
    }

    /// Access `region`; on a miss, install `fill_tag` for it, evicting an
    /// NMRU victim if the (mode-dependent) candidate set is full. Returns
    /// (hit, tag now cached, evicted region if any).
    pub fn access(
        &mut self,
        region: u64,
        fill_tag: TagId,
        client: ClientId,
        sticky: bool,
        rng: &mut ChaCha8Rng,
    ) -> (bool, TagId, Option<u64>) {
        self.tick += 1;
        if let Some(&i) = self.index.get(&region) {
            self.entries[i].recency = self.tick;
            self.mru = Some(i);
            return (true, self.entries[i].tag, None);
        }

        let (lo, hi) = match self.mode {
            MmcMode::Partitioned => *self
                .partitions
                .get(&client)
                .unwrap_or_else(|| panic!("client {client} has no partition")),
            _ => (0, self.entries.len()),
        };

        let slot = if let Some(free) = (lo..hi).find(|&i| !self.entries[i].valid) {
            free
        } else {
            let candidate = |i: usize| self.entries[i].valid && self.mru != Some(i);
            let mut pool: Vec<usize> = (lo..hi)
                .filter(|&i| candidate(i) && !self.entries[i].sticky)
                .collect();
            if pool.is_empty() {
                pool = (lo..hi).filter(|&i| candidate(i)).collect();
            }
            if pool.is_empty() {
                // degenerate single-entry partition: evict the MRU itself
                pool = (lo..hi).collect();
            }
            pool[rng.gen_range(0..pool.len())]
        };

        let victim = self.entries[slot].valid.then(|| {
            let r = self.entries[slot].region;
            self.index.remove(&r);
            r
        });
        self.entries[slot] = MmcEntry {
            valid: true,
            region,
            tag: fill_tag,
            recency: self.tick,
            owner: client,
            sticky,
        };
        self.index.insert(region, slot);
        self.mru = Some(slot);
        (false, fill_tag, victim)
    }

    /// Drop `region`'s entry if cached; true if one existed.
    pub fn invalidate(&mut self, region: u64) -> bool {
        if let Some(i) = self.index.remove(&region) {
            self.entries[i].valid = false;
            self.entries[i].sticky = false;
            if self.mru == Some(i) {
                self.mru = None;
            }
            true
        } else {
            false
        }
    }

    pub fn flush(&mut self) {
        for e in &mut self.entries {
            e.valid = false;
            e.sticky = false;
        }
        self.index.clear();
        self.mru = None;
    }

    /// Regions currently cached for `owner` (diagnostics and tests).
    pub fn resident_regions_of(&self, owner: ClientId) -> Vec<u64> {
        let mut v: Vec<u64> = self
            .entries
            .iter()
            .filter(|e| e.valid && e.owner == owner)
            .map(|e| e.region)
            .collect();
        v.sort_unstable();
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    const C0: ClientId = ClientId(0);
    const C1: ClientId = ClientId(1);

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(9)
    }

    fn shared(n: usize) -> Mmc {
        Mmc::new(n, MmcMode::Shared, &[])
    }

    #[test]
    fn miss_then_hit() {
        let mut m = shared(4);
        let mut r = rng();
        let (hit, tag, victim) = m.access(3, TagId(7), C0, false, &mut r);
        assert!(!hit && victim.is_none());
        assert_eq!(tag, TagId(7));
        let (hit, tag, _) = m.access(3, TagId(0), C0, false, &mut r);
        assert!(hit, "second access must hit");
        assert_eq!(tag, TagId(7), "hit returns the cached tag, not fill_tag");
    }

    #[test]
    fn nmru_with_single_candidate_is_deterministic() {
        // 2-entry cache: fill A then B (B is MRU); C must evict A.
        let mut m = shared(2);
        let mut r = rng();
        m.access(100, TagId(1), C0, false, &mut r);
        m.access(200, TagId(2), C0, false, &mut r);
        let (_, _, victim) = m.access(300, TagId(3), C0, false, &mut r);
        assert_eq!(victim, Some(100));
    }

    #[test]
    fn invalidate_reports_presence() {
        let mut m = shared(4);
        let mut r = rng();
        m.access(5, TagId(1), C0, false, &mut r);
        assert!(m.invalidate(5));
        assert!(!m.invalidate(5));
        let (hit, _, _) = m.access(5, TagId(1), C0, false, &mut r);
        assert!(!hit);
    }

    #[test]
    fn partitioned_fills_never_cross() {
        let mut m = Mmc::new(8, MmcMode::Partitioned, &[C0, C1]);
        let mut r = rng();
        for reg in 0..4u64 {
            m.access(reg, TagId(1), C0, false, &mut r);
        }
        let before = m.resident_regions_of(C0);
        assert_eq!(before, vec![0, 1, 2, 3]);
        // adversarial stream of fills from the other client
        for reg in 100..200u64 {
            m.access(reg, TagId(2), C1, false, &mut r);
        }
        assert_eq!(m.resident_regions_of(C0), before);
    }

    #[test]
    fn sticky_entries_survive_until_no_other_victim() {
        let mut m = Mmc::new(4, MmcMode::Prioritized, &[]);
        let mut r = rng();
        m.access(1, TagId(1), C0, true, &mut r);
        for reg in 10..100u64 {
            m.access(reg, TagId(2), C1, false, &mut r);
            assert!(m.probe(1).is_some(), "sticky entry evicted early");
        }
        // fill everything sticky: eviction must still make progress
        m.flush();
        for reg in 0..4u64 {
            m.access(reg, TagId(1), C0, true, &mut r);
        }
        let (hit, _, victim) = m.access(9, TagId(1), C0, true, &mut r);
        assert!(!hit);
        assert!(victim.is_some());
    }

    #[test]
    fn hit_may_land_in_other_partition() {
        // no duplicate entries: C1 reuses C0's cached region instead of
        // filling its own copy
        let mut m = Mmc::new(8, MmcMode::Partitioned, &[C0, C1]);
        let mut r = rng();
        m.access(42, TagId(3), C0, false, &mut r);
        let (hit, tag, _) = m.access(42, TagId(0), C1, false, &mut r);
        assert!(hit);
        assert_eq!(tag, TagId(3));
    }
}
