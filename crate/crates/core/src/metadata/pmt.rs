//! Private metadata table: 256 fixed-size slots per client, indexed by tag.

use crate::error::MetadataError;
use crate::types::TagId;

pub const PMT_SLOTS: usize = 256;

#[derive(Debug, Clone)]
pub struct Pmt {
    entry_bytes: usize,
    slots: Vec<Vec<u8>>,
}

impl Pmt {
    pub fn new(entry_bytes: usize) -> Self {
        assert!(entry_bytes >= 1);
        Pmt {
            entry_bytes,
            slots: vec![vec![0; entry_bytes]; PMT_SLOTS],
        }
    }

    pub fn entry_bytes(&self) -> usize {
        self.entry_bytes
    }

    /// Overwrite the slot for `tag`; shorter payloads are zero-extended.
    pub fn write(&mut self, tag: TagId, metadata: &[u8]) -> Result<(), MetadataError> {
        if tag.is_untagged() {
            return Err(MetadataError::ReservedTag);
        }
        if metadata.len() > self.entry_bytes {
            return Err(MetadataError::Capacity {
                len: metadata.len(),
                capacity: self.entry_bytes,
            });
        }
        let slot = &mut self.slots[tag.0 as usize];
        slot.fill(0);
        slot[..metadata.len()].copy_from_slice(metadata);
        Ok(())
    }

    /// Slot contents for `tag` (all zeros if never written).
    pub fn read(&self, tag: TagId) -> &[u8] {
        &self.slots[tag.0 as usize]
    }

    pub fn clear(&mut self) {
        for s in &mut self.slots {
            s.fill(0);
        }
    }
}
