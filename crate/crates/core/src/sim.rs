//! Trace replay: one in-order core, the metadata plane, and the
//! configured clients, stepped over a trace's events. Produces the final
//! counters, the trap log, and the prefetch address log.

use crate::clients::prefetch::{GraphPrefetchMeta, PrefetchBuffer, PrefetchQueue};
use crate::clients::{ClientKind, ClientSpec};
use crate::config::SimConfig;
use crate::error::{ConfigError, SimFault};
use crate::isa::{exec_meta_op, ExecError, MetaOp, PendingBinding};
use crate::machine::{Machine, Serviced, Stats};
use crate::metadata::{LookupMode, LookupResult, MetadataPlane};
use crate::os::{allocate_mmt, PageMap, TrapKind, TrapRecord};
use crate::trace::{AccessKind, MemImage, Trace, TraceEvent};
use crate::types::{ClientId, Cycle, TagId, VAddr};

/// Tag the return-address protector claims for live return slots.
const RAP_TAG: TagId = TagId(1);

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Fault(#[from] SimFault),
}

/// Everything a finished run reports.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub stats: Stats,
    pub traps: Vec<TrapRecord>,
    /// Addresses the chained prefetcher asked for, in emission order and
    /// before any dedup or drop in the issue path.
    pub prefetch_log: Vec<VAddr>,
    /// Trace positions of metadata operators never bound to an access.
    pub unbound_meta: Vec<u64>,
    /// True when a trap ended the run early.
    pub terminated: bool,
}

struct Sim<'t> {
    cfg: SimConfig,
    machine: Machine,
    plane: MetadataPlane,
    page_map: PageMap,
    clients: Vec<ClientSpec>,
    image: &'t MemImage,
    /// Side registry for the idealized prefetcher: structure metadata
    /// harvested from the trace preamble, consulted for free.
    registry: Vec<GraphPrefetchMeta>,
    buffer: PrefetchBuffer,
    queue: PrefetchQueue,
    pending: PendingBinding,
    traps: Vec<TrapRecord>,
    prefetch_log: Vec<VAddr>,
    /// The plane services one lookup at a time; next one starts no earlier.
    lookup_free_at: Cycle,
    expected_next: Option<TrapKind>,
    terminated: bool,
}

pub fn run_trace(cfg: &SimConfig, trace: &Trace) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let mut sim = Sim::build(cfg.clone(), trace)?;
    sim.run(trace)
}

impl<'t> Sim<'t> {
    fn build(cfg: SimConfig, trace: &'t Trace) -> Result<Self, RunError> {
        let clients = cfg.parsed_clients()?;
        let (_, mmt_base) = allocate_mmt(
            cfg.phys_mem_bytes,
            cfg.granularity_bytes,
            cfg.machine.page_bytes,
        )?;
        if trace.header.aspace_bytes > mmt_base {
            return Err(ConfigError::new(format!(
                "trace needs {:#x} bytes but only {mmt_base:#x} fit below the metadata table",
                trace.header.aspace_bytes
            ))
            .into());
        }
        let ids: Vec<ClientId> = (0..clients.len() as u8).map(ClientId).collect();
        let registry = if clients
            .iter()
            .any(|c| c.kind == ClientKind::GraphPrefetchIdeal)
        {
            harvest_registry(trace)
        } else {
            Vec::new()
        };
        Ok(Sim {
            machine: Machine::new(&cfg.machine, cfg.seed),
            plane: MetadataPlane::new(&cfg.plane_params(mmt_base), &ids, cfg.seed),
            page_map: PageMap::new(cfg.machine.page_bytes, cfg.phys_mem_bytes, mmt_base),
            clients,
            image: &trace.header.image,
            registry,
            buffer: PrefetchBuffer::new(cfg.prefetch_buffer_lines),
            queue: PrefetchQueue::new(cfg.prefetch_queue_len),
            pending: PendingBinding::default(),
            traps: Vec::new(),
            prefetch_log: Vec::new(),
            lookup_free_at: 0,
            expected_next: None,
            terminated: false,
            cfg,
        })
    }

    fn run(&mut self, trace: &Trace) -> Result<RunOutput, RunError> {
        for (pos, ev) in trace.events.iter().enumerate() {
            if self.terminated {
                break;
            }
            self.drain_prefetch_queue();
            match ev {
                TraceEvent::MemAccess {
                    kind,
                    vaddr,
                    size_bytes,
                } => {
                    self.pending.commit();
                    self.mem_access(pos, *kind, *vaddr, *size_bytes)?;
                    self.expected_next = None;
                }
                TraceEvent::Meta(op) => {
                    self.pending.queue(pos as u64);
                    exec_meta_op(&mut self.machine, &mut self.plane, &self.page_map, op)
                        .map_err(|e| fault_from_exec(e, pos))?;
                }
                TraceEvent::Call { ret_slot } => {
                    self.pending.commit();
                    self.call(pos, *ret_slot)?;
                }
                TraceEvent::Return { ret_slot } => {
                    self.pending.commit();
                    self.ret(pos, *ret_slot)?;
                }
                TraceEvent::ComputeCycles { n } => self.machine.compute(*n),
                TraceEvent::Label { kind } => self.expected_next = Some(*kind),
            }
        }
        let mut stats = self.machine.stats.clone();
        stats.cycles = self.machine.now;
        Ok(RunOutput {
            stats,
            traps: std::mem::take(&mut self.traps),
            prefetch_log: std::mem::take(&mut self.prefetch_log),
            unbound_meta: self.pending.unbound().to_vec(),
            terminated: self.terminated,
        })
    }

    /// One explicit load or store, with every configured client's reaction.
    fn mem_access(
        &mut self,
        pos: usize,
        kind: AccessKind,
        vaddr: VAddr,
        _size: u32,
    ) -> Result<(), RunError> {
        let (paddr, post_translate, tlb_missed) = self.translate(pos, vaddr)?;
        let serviced = self.demand(paddr);

        for idx in 0..self.clients.len() {
            if self.terminated {
                break;
            }
            let spec = self.clients[idx];
            match spec.kind {
                ClientKind::NullAll => {
                    self.lookup_for(idx, pos, paddr, post_translate)?;
                }
                ClientKind::NullMiss => {
                    if serviced != Serviced::L1Hit {
                        self.lookup_for(idx, pos, paddr, post_translate)?;
                    }
                }
                ClientKind::NullTlbPte => {
                    if tlb_missed {
                        let pte = self.cfg.pt_base + (vaddr / self.cfg.machine.page_bytes) * 8;
                        if let Some(pte_pa) = self.page_map.translate(pte) {
                            self.lookup_for(idx, pos, pte_pa, post_translate)?;
                        }
                    }
                }
                ClientKind::Bounds => self.bounds_check(idx, pos, vaddr, paddr, post_translate)?,
                ClientKind::Rap => {
                    if kind == AccessKind::Store {
                        self.rap_check(idx, pos, vaddr, paddr, post_translate)?;
                    }
                }
                ClientKind::GraphPrefetch => {
                    self.graph_snoop(idx, pos, vaddr, paddr, post_translate)?;
                }
                ClientKind::GraphPrefetchIdeal => self.ideal_snoop(vaddr),
                ClientKind::StrideRef => {
                    if serviced != Serviced::L1Hit {
                        self.stride_snoop(vaddr);
                    }
                }
            }
        }
        Ok(())
    }

    /// Call: push the return address (a real store) and let the protector
    /// claim the slot.
    fn call(&mut self, pos: usize, ret_slot: VAddr) -> Result<(), RunError> {
        let (paddr, _, _) = self.translate(pos, ret_slot)?;
        self.demand(paddr);
        if self.has_client(ClientKind::Rap) {
            let at = self.machine.now;
            self.machine.compute(1);
            self.plane.write_tag_range(&mut self.machine, paddr, 8, RAP_TAG, at);
            self.machine.stats.map_ops += 1;
        }
        Ok(())
    }

    /// Return: the matching load, and the slot goes back to untagged.
    fn ret(&mut self, pos: usize, ret_slot: VAddr) -> Result<(), RunError> {
        let (paddr, _, _) = self.translate(pos, ret_slot)?;
        self.demand(paddr);
        if self.has_client(ClientKind::Rap) {
            let at = self.machine.now;
            self.machine.compute(1);
            self.plane
                .write_tag_range(&mut self.machine, paddr, 8, TagId::UNTAGGED, at);
            self.machine.stats.map_ops += 1;
        }
        Ok(())
    }

    fn translate(&mut self, pos: usize, vaddr: VAddr) -> Result<(VAddr, Cycle, bool), RunError> {
        let misses_before = self.machine.stats.tlb_misses;
        let page_map = &self.page_map;
        let paddr = self
            .machine
            .translate(vaddr, |v| page_map.translate(v))
            .ok_or(SimFault::UnmappedAddress { vaddr, pos })?;
        let tlb_missed = self.machine.stats.tlb_misses > misses_before;
        Ok((paddr, self.machine.now, tlb_missed))
    }

    fn demand(&mut self, paddr: VAddr) -> Serviced {
        let line = paddr / self.cfg.machine.l1_line_bytes;
        let buffered = if self.machine.l1.contains(paddr) {
            None
        } else {
            self.buffer.take(line)
        };
        self.machine.demand_access(paddr, buffered)
    }

    fn has_client(&self, kind: ClientKind) -> bool {
        self.clients.iter().any(|c| c.kind == kind)
    }

    /// One plane lookup through the serialized port. ForceStall results
    /// hold the core; the others run out their latency in the background.
    fn lookup_for(
        &mut self,
        idx: usize,
        pos: usize,
        paddr: VAddr,
        earliest: Cycle,
    ) -> Result<LookupResult, RunError> {
        let spec = self.clients[idx];
        let start_at = earliest.max(self.lookup_free_at);
        let page_map = &self.page_map;
        let r = self
            .plane
            .lookup(
                &mut self.machine,
                ClientId(idx as u8),
                paddr,
                spec.mode,
                start_at,
                |v| page_map.translate(v),
            )
            .map_err(|e| SimFault::MetaOp { pos, source: e })?;
        self.lookup_free_at = r.done_at;
        if spec.mode == LookupMode::ForceStall {
            self.machine.now = self.machine.now.max(r.done_at);
        }
        Ok(r)
    }

    fn trap(&mut self, kind: TrapKind, vaddr: VAddr, pos: usize) {
        let expected = self.expected_next == Some(kind);
        self.machine.stats.traps += 1;
        self.traps.push(TrapRecord {
            kind,
            vaddr,
            position: pos as u64,
            expected,
            at_cycle: self.machine.now,
        });
        if self.cfg.traps_terminate {
            self.terminated = true;
        }
    }

    /// Bounds client: an access armed by CREATE must land on the armed
    /// tag. Unarmed accesses pass unchecked.
    fn bounds_check(
        &mut self,
        idx: usize,
        pos: usize,
        vaddr: VAddr,
        paddr: VAddr,
        earliest: Cycle,
    ) -> Result<(), RunError> {
        let Some(armed) = self.plane.take_armed(ClientId(idx as u8)) else {
            return Ok(());
        };
        let r = self.lookup_for(idx, pos, paddr, earliest)?;
        if r.dropped {
            return Ok(());
        }
        if r.tag.unwrap_or(TagId::UNTAGGED) != armed {
            self.trap(TrapKind::BoundsViolation, vaddr, pos);
        }
        Ok(())
    }

    /// Return-address protector: any explicit store into a live slot traps.
    fn rap_check(
        &mut self,
        idx: usize,
        pos: usize,
        vaddr: VAddr,
        paddr: VAddr,
        earliest: Cycle,
    ) -> Result<(), RunError> {
        let r = self.lookup_for(idx, pos, paddr, earliest)?;
        if !r.dropped && r.tag == Some(RAP_TAG) {
            self.trap(TrapKind::ReturnAddressOverwrite, vaddr, pos);
        }
        Ok(())
    }

    /// Chained prefetcher: a snoop that finds chain-root metadata runs
    /// ahead by the stride, then follows value-dependent hops while each
    /// computed address stays inside the structure the chain expects.
    fn graph_snoop(
        &mut self,
        idx: usize,
        pos: usize,
        vaddr: VAddr,
        paddr: VAddr,
        earliest: Cycle,
    ) -> Result<(), RunError> {
        let r = self.lookup_for(idx, pos, paddr, earliest)?;
        if r.dropped {
            return Ok(());
        }
        let Some(meta) = r.metadata.as_deref().and_then(GraphPrefetchMeta::decode) else {
            return Ok(());
        };
        if !meta.chain_root {
            return Ok(());
        }
        let ahead = vaddr + meta.stride * meta.elem_size;
        if !meta.contains(ahead) {
            return Ok(());
        }
        let mut at = r.done_at;
        self.emit_prefetch(ahead, at);
        let mut value = self.image.value_at(ahead);
        let mut next = meta.next;
        while let Some((nbase, nelem)) = next {
            let a = nbase + value * nelem;
            let Some(pa) = self.page_map.translate(a) else {
                break;
            };
            let hop = self.lookup_for(idx, pos, pa, at)?;
            if hop.dropped {
                break;
            }
            at = hop.done_at;
            let Some(m) = hop.metadata.as_deref().and_then(GraphPrefetchMeta::decode) else {
                break;
            };
            if m.own_base != nbase || !m.contains(a) {
                break;
            }
            self.emit_prefetch(a, at);
            value = self.image.value_at(a);
            next = m.next;
        }
        Ok(())
    }

    /// The same chain walk fed from the preamble registry: no lookups, no
    /// latency, nothing dropped. Upper bound for the real client.
    fn ideal_snoop(&mut self, vaddr: VAddr) {
        let Some(meta) = self.registry.iter().find(|m| m.contains(vaddr)).copied() else {
            return;
        };
        if !meta.chain_root {
            return;
        }
        let ahead = vaddr + meta.stride * meta.elem_size;
        if !meta.contains(ahead) {
            return;
        }
        let at = self.machine.now;
        self.queue_prefetch(ahead, at);
        let mut value = self.image.value_at(ahead);
        let mut next = meta.next;
        while let Some((nbase, nelem)) = next {
            let a = nbase + value * nelem;
            let Some(m) = self
                .registry
                .iter()
                .find(|m| m.own_base == nbase && m.contains(a))
                .copied()
            else {
                break;
            };
            self.queue_prefetch(a, at);
            value = self.image.value_at(a);
            next = m.next;
        }
    }

    /// Reference stride prefetcher: next N lines after a missing access.
    fn stride_snoop(&mut self, vaddr: VAddr) {
        let line_bytes = self.cfg.machine.l1_line_bytes;
        let at = self.machine.now;
        for i in 1..=self.cfg.stride_ref_lines {
            self.queue_prefetch((vaddr / line_bytes + i) * line_bytes, at);
        }
    }

    fn emit_prefetch(&mut self, vaddr: VAddr, earliest: Cycle) {
        self.prefetch_log.push(vaddr);
        self.queue_prefetch(vaddr, earliest);
    }

    fn queue_prefetch(&mut self, vaddr: VAddr, earliest: Cycle) {
        if let Some(pa) = self.page_map.translate(vaddr) {
            self.queue.push(pa / self.cfg.machine.l1_line_bytes, earliest);
        }
    }

    /// Issue waiting prefetches while an MSHR is free. Runs at event
    /// boundaries; fills occupy their MSHR until the line arrives.
    fn drain_prefetch_queue(&mut self) {
        let line_bytes = self.cfg.machine.l1_line_bytes;
        loop {
            let now = self.machine.now;
            if self.machine.mshr.free_at(now) == 0 {
                break;
            }
            let Some(line) = self.queue.pop_ready(now) else {
                break;
            };
            if self.machine.l1.contains(line * line_bytes) || self.buffer.contains(line) {
                continue;
            }
            let done = self.machine.mem_request_at(now);
            self.machine.mshr.acquire(now, done);
            self.buffer.insert(line, done);
            self.machine.stats.prefetches_issued += 1;
        }
    }
}

fn fault_from_exec(e: ExecError, pos: usize) -> SimFault {
    match e {
        ExecError::Unmapped(vaddr) => SimFault::UnmappedAddress { vaddr, pos },
        ExecError::Metadata(source) => SimFault::MetaOp { pos, source },
    }
}

fn harvest_registry(trace: &Trace) -> Vec<GraphPrefetchMeta> {
    trace
        .events
        .iter()
        .filter_map(|ev| match ev {
            TraceEvent::Meta(MetaOp::Create { metadata, .. }) => {
                GraphPrefetchMeta::decode(metadata)
            }
            _ => None,
        })
        .collect()
}
