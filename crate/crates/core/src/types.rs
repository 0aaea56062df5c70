//! Small domain types shared across the simulator.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Virtual address in the simulated process address space.
pub type VAddr = u64;
/// Physical address in the simulated machine.
pub type PAddr = u64;
/// Core clock cycle.
pub type Cycle = u64;

/// 8-bit tag identifier. Tag 0 is reserved and means "untagged"; a range is
/// untagged by writing tag 0 back over it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TagId(pub u8);

impl TagId {
    pub const UNTAGGED: TagId = TagId(0);

    pub fn is_untagged(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for TagId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Static 8-bit identifier of a hardware optimization client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClientId(pub u8);

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// True if `v` is a nonzero power of two.
pub fn is_pow2(v: u64) -> bool {
    v != 0 && v & (v - 1) == 0
}

/// Splitmix64 step; used to derive per-repetition and per-component seeds
/// from a single run seed.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
