//! The clients that sit on the metadata plane: prefetchers, the two
//! protection schemes, and null clients that only exercise lookup traffic.

pub mod prefetch;

use crate::error::ConfigError;
use crate::metadata::LookupMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientKind {
    /// Chained graph prefetcher driven by per-structure metadata.
    GraphPrefetch,
    /// Same prefetcher fed from a zero-cost side registry instead of the
    /// metadata plane; the upper bound the real client chases.
    GraphPrefetchIdeal,
    /// Conventional next-N-lines prefetcher, no metadata involved.
    StrideRef,
    /// Bounds checker: CREATE arms an expected tag, mismatch traps.
    Bounds,
    /// Return-address protector keyed off call/return events.
    Rap,
    /// Lookup on every access, result discarded.
    NullAll,
    /// Lookup on L1 misses only, result discarded.
    NullMiss,
    /// Lookup on TLB misses, keyed by the page-table-entry address.
    NullTlbPte,
}

impl ClientKind {
    pub fn name(self) -> &'static str {
        match self {
            ClientKind::GraphPrefetch => "graph_prefetch",
            ClientKind::GraphPrefetchIdeal => "graph_prefetch_ideal",
            ClientKind::StrideRef => "stride_ref",
            ClientKind::Bounds => "bounds",
            ClientKind::Rap => "rap",
            ClientKind::NullAll => "null_all",
            ClientKind::NullMiss => "null_miss",
            ClientKind::NullTlbPte => "null_tlb_pte",
        }
    }

    fn default_mode(self) -> LookupMode {
        match self {
            ClientKind::GraphPrefetch => LookupMode::BestEffort,
            _ => LookupMode::ForceStall,
        }
    }

    /// Whether this client consults the metadata plane at all.
    pub fn uses_plane(self) -> bool {
        !matches!(self, ClientKind::GraphPrefetchIdeal | ClientKind::StrideRef)
    }
}

/// One configured client: what it is and how its lookups are timed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClientSpec {
    pub kind: ClientKind,
    pub mode: LookupMode,
}

/// Parse "name" or "name:mode", e.g. "bounds" or "null_all:no_stall".
pub fn parse_client(s: &str) -> Result<ClientSpec, ConfigError> {
    let (name, mode) = match s.split_once(':') {
        Some((n, m)) => (n, Some(m)),
        None => (s, None),
    };
    let kind = match name {
        "graph_prefetch" => ClientKind::GraphPrefetch,
        "graph_prefetch_ideal" => ClientKind::GraphPrefetchIdeal,
        "stride_ref" => ClientKind::StrideRef,
        "bounds" => ClientKind::Bounds,
        "rap" => ClientKind::Rap,
        "null_all" => ClientKind::NullAll,
        "null_miss" => ClientKind::NullMiss,
        "null_tlb_pte" => ClientKind::NullTlbPte,
        other => return Err(ConfigError::new(format!("unknown client \"{other}\""))),
    };
    let mode = match mode {
        None => kind.default_mode(),
        Some("force_stall") => LookupMode::ForceStall,
        Some("no_stall") => LookupMode::NoStall,
        Some("best_effort") => LookupMode::BestEffort,
        Some(other) => {
            return Err(ConfigError::new(format!(
                "unknown lookup mode \"{other}\" for client \"{name}\""
            )))
        }
    };
    Ok(ClientSpec { kind, mode })
}
