//! The metadata operator set: CREATE, MAP/UNMAP and their 2D/3D strided
//! forms, plus the bookkeeping that binds each operator to the next memory
//! operation in program order.

use crate::error::MetadataError;
use crate::machine::Machine;
use crate::metadata::MetadataPlane;
use crate::os::PageMap;
use crate::types::{ClientId, TagId, VAddr};
use serde::{Deserialize, Serialize};

/// One metadata operator as it appears in a trace.
///
/// The 2D/3D forms tag `len_x` useful bytes per row at a row pitch of
/// `size_x`; `size_y`/`len_y` count rows per plane and `size_z` counts
/// planes, with plane pitch `size_y * size_x`. UNMAP spellings carry no
/// tag: they force the range back to untagged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "op")]
pub enum MetaOp {
    Create {
        client: ClientId,
        tag: TagId,
        metadata: Vec<u8>,
    },
    Map {
        tag: TagId,
        vstart: VAddr,
        size: u64,
    },
    Unmap {
        vstart: VAddr,
        size: u64,
    },
    Map2D {
        tag: TagId,
        vstart: VAddr,
        len_x: u64,
        size_x: u64,
        size_y: u64,
    },
    Unmap2D {
        vstart: VAddr,
        len_x: u64,
        size_x: u64,
        size_y: u64,
    },
    Map3D {
        tag: TagId,
        vstart: VAddr,
        len_x: u64,
        len_y: u64,
        size_x: u64,
        size_y: u64,
        size_z: u64,
    },
    Unmap3D {
        vstart: VAddr,
        len_x: u64,
        len_y: u64,
        size_x: u64,
        size_y: u64,
        size_z: u64,
    },
}

/// Why a metadata operator could not execute.
#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error("page at {0:#x} is not mapped")]
    Unmapped(VAddr),
    #[error(transparent)]
    Metadata(#[from] MetadataError),
}

/// Operators whose architectural effect is tied to the next load/store.
/// Effects are applied eagerly (the next memory event would observe them
/// anyway on an in-order core); this records which trace positions are
/// still awaiting their binding access so the end-of-trace flush can be
/// checked.
#[derive(Debug, Clone, Default)]
pub struct PendingBinding {
    positions: Vec<u64>,
}

impl PendingBinding {
    pub fn queue(&mut self, position: u64) {
        self.positions.push(position);
    }

    /// The next load/store commits everything queued.
    pub fn commit(&mut self) {
        self.positions.clear();
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Positions of operators never followed by a memory access.
    pub fn unbound(&self) -> &[u64] {
        &self.positions
    }
}

/// Write the client's PMT slot and latch the tag as the client's armed
/// tag. One instruction cycle.
pub fn exec_create(
    machine: &mut Machine,
    plane: &mut MetadataPlane,
    client: ClientId,
    tag: TagId,
    metadata: &[u8],
) -> Result<(), ExecError> {
    machine.compute(1);
    plane.pmt_write(client, tag, metadata)?;
    plane.arm(client, tag)?;
    machine.stats.create_ops += 1;
    Ok(())
}

/// Tag one virtual range: split it into page-contiguous physical subranges
/// and write each through the plane (table update, shadowing-entry
/// invalidation, posted write traffic).
fn map_range(
    machine: &mut Machine,
    plane: &mut MetadataPlane,
    page_map: &PageMap,
    tag: TagId,
    vstart: VAddr,
    size: u64,
) -> Result<(), ExecError> {
    let page = page_map.page_bytes();
    let at = machine.now;
    let mut va = vstart;
    let end = vstart + size;
    while va < end {
        let page_end = (va / page + 1) * page;
        let chunk_end = end.min(page_end);
        let pstart = page_map.translate(va).ok_or(ExecError::Unmapped(va))?;
        // extend across physically contiguous pages to batch table writes
        let mut run_end = chunk_end;
        let mut expect_pa = pstart + (chunk_end - va);
        let mut va_next = chunk_end;
        while va_next < end && va_next.is_multiple_of(page) {
            match page_map.translate(va_next) {
                Some(pa) if pa == expect_pa => {
                    run_end = end.min(va_next + page);
                    expect_pa += run_end - va_next;
                    va_next = run_end;
                }
                _ => break,
            }
        }
        plane.write_tag_range(machine, pstart, run_end - va, tag, at);
        va = run_end;
    }
    Ok(())
}

/// MAP/UNMAP: one instruction cycle plus posted table-write traffic.
pub fn exec_map(
    machine: &mut Machine,
    plane: &mut MetadataPlane,
    page_map: &PageMap,
    tag: TagId,
    vstart: VAddr,
    size: u64,
) -> Result<(), ExecError> {
    machine.compute(1);
    machine.stats.map_ops += 1;
    map_range(machine, plane, page_map, tag, vstart, size)
}

/// The strided 2D/3D forms, decomposed row by row.
#[allow(clippy::too_many_arguments)]
pub fn exec_map_nd(
    machine: &mut Machine,
    plane: &mut MetadataPlane,
    page_map: &PageMap,
    tag: TagId,
    vstart: VAddr,
    len_x: u64,
    rows: u64,
    size_x: u64,
    plane_pitch: u64,
    planes: u64,
) -> Result<(), ExecError> {
    machine.compute(1);
    machine.stats.map_ops += 1;
    for q in 0..planes {
        for r in 0..rows {
            let row = vstart + q * plane_pitch + r * size_x;
            map_range(machine, plane, page_map, tag, row, len_x)?;
        }
    }
    Ok(())
}

/// Dispatch one operator.
pub fn exec_meta_op(
    machine: &mut Machine,
    plane: &mut MetadataPlane,
    page_map: &PageMap,
    op: &MetaOp,
) -> Result<(), ExecError> {
    match *op {
        MetaOp::Create {
            client,
            tag,
            ref metadata,
        } => exec_create(machine, plane, client, tag, metadata),
        MetaOp::Map { tag, vstart, size } => {
            exec_map(machine, plane, page_map, tag, vstart, size)
        }
        MetaOp::Unmap { vstart, size } => {
            exec_map(machine, plane, page_map, TagId::UNTAGGED, vstart, size)
        }
        MetaOp::Map2D {
            tag,
            vstart,
            len_x,
            size_x,
            size_y,
        } => exec_map_nd(
            machine, plane, page_map, tag, vstart, len_x, size_y, size_x, 0, 1,
        ),
        MetaOp::Unmap2D {
            vstart,
            len_x,
            size_x,
            size_y,
        } => exec_map_nd(
            machine,
            plane,
            page_map,
            TagId::UNTAGGED,
            vstart,
            len_x,
            size_y,
            size_x,
            0,
            1,
        ),
        MetaOp::Map3D {
            tag,
            vstart,
            len_x,
            len_y,
            size_x,
            size_y,
            size_z,
        } => exec_map_nd(
            machine,
            plane,
            page_map,
            tag,
            vstart,
            len_x,
            len_y,
            size_x,
            size_y * size_x,
            size_z,
        ),
        MetaOp::Unmap3D {
            vstart,
            len_x,
            len_y,
            size_x,
            size_y,
            size_z,
        } => exec_map_nd(
            machine,
            plane,
            page_map,
            TagId::UNTAGGED,
            vstart,
            len_x,
            len_y,
            size_x,
            size_y * size_x,
            size_z,
        ),
    }
}
