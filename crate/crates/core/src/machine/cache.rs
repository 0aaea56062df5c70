//! Set-associative cache tag array with LRU or NMRU replacement.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Replacement {
    Lru,
    Nmru,
}

#[derive(Debug, Clone, Default)]
struct Line {
    valid: bool,
    line_no: u64,
    recency: u64,
}

/// Tag-only cache model: tracks which line numbers are resident, not data.
#[derive(Debug, Clone)]
pub struct SetAssocCache {
    sets: Vec<Vec<Line>>,
    ways: usize,
    line_bytes: u64,
    replacement: Replacement,
    tick: u64,
}

impl SetAssocCache {
    pub fn new(sets: usize, ways: usize, line_bytes: u64, replacement: Replacement) -> Self {
        assert!(sets >= 1 && ways >= 1);
        SetAssocCache {
            sets: vec![vec![Line::default(); ways]; sets],
            ways,
            line_bytes,
            replacement,
            tick: 0,
        }
    }

    pub fn line_bytes(&self) -> u64 {
        self.line_bytes
    }

    pub fn line_of(&self, paddr: u64) -> u64 {
        paddr / self.line_bytes
    }

    fn set_of(&self, line_no: u64) -> usize {
        (line_no % self.sets.len() as u64) as usize
    }

    /// Probe without state updates.
    pub fn contains(&self, paddr: u64) -> bool {
        let line_no = self.line_of(paddr);
        self.sets[self.set_of(line_no)]
            .iter()
            .any(|l| l.valid && l.line_no == line_no)
    }

    /// Access the line holding `paddr`. On a miss the line is installed and
    /// the evicted line number (if any) is returned. Writes allocate like
    /// reads; writeback traffic is not modeled.
    pub fn access(&mut self, paddr: u64, rng: &mut ChaCha8Rng) -> (bool, Option<u64>) {
        let line_no = self.line_of(paddr);
        self.fill_line(line_no, rng)
    }

    /// Install `line_no` (used both by demand accesses and prefetch fills).
    pub fn fill_line(&mut self, line_no: u64, rng: &mut ChaCha8Rng) -> (bool, Option<u64>) {
        let set_idx = self.set_of(line_no);
        self.tick += 1;
        let tick = self.tick;
        let set = &mut self.sets[set_idx];

        if let Some(l) = set.iter_mut().find(|l| l.valid && l.line_no == line_no) {
            l.recency = tick;
            return (true, None);
        }

        let way = if let Some(free) = set.iter().position(|l| !l.valid) {
            free
        } else {
            match self.replacement {
                Replacement::Lru => set
                    .iter()
                    .enumerate()
                    .min_by_key(|(_, l)| l.recency)
                    .map(|(i, _)| i)
                    .unwrap(),
                Replacement::Nmru => {
                    let mru = set
                        .iter()
                        .enumerate()
                        .max_by_key(|(_, l)| l.recency)
                        .map(|(i, _)| i)
                        .unwrap();
                    if self.ways == 1 {
                        0
                    } else {
                        let mut pick = rng.gen_range(0..self.ways - 1);
                        if pick >= mru {
                            pick += 1;
                        }
                        pick
                    }
                }
            }
        };
        let victim = set[way].valid.then_some(set[way].line_no);
        set[way] = Line {
            valid: true,
            line_no,
            recency: tick,
        };
        (false, victim)
    }

    pub fn flush(&mut self) {
        for set in &mut self.sets {
            for l in set.iter_mut() {
                l.valid = false;
            }
        }
    }
}
