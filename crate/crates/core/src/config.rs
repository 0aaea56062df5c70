//! One flat configuration object for a simulation run: machine knobs,
//! metadata-plane knobs, and the client list. Loads from JSON and accepts
//! `key=value` overrides with the same field names.

use crate::clients::{parse_client, ClientSpec};
use crate::error::ConfigError;
use crate::machine::MachineConfig;
use crate::metadata::{MmcMode, PlaneParams, TranslationMode};
use crate::types::{is_pow2, ClientId, PAddr};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    #[serde(flatten)]
    pub machine: MachineConfig,

    pub phys_mem_bytes: u64,
    pub granularity_bytes: u64,
    pub mmc_entries: usize,
    pub mmc_hit_cycles: u64,
    pub mmc_mode: MmcMode,
    pub sticky_client: Option<u8>,
    pub translation_mode: TranslationMode,
    pub pmt_entry_bytes: usize,
    pub mmt_line_regions: u64,

    pub context_switch_cycles: u64,
    pub flush_mmc_on_switch: bool,
    /// Stop replay at the first trap instead of recording and continuing.
    pub traps_terminate: bool,

    pub prefetch_buffer_lines: usize,
    pub prefetch_queue_len: usize,
    /// Lines ahead the reference stride prefetcher fetches on an L1 miss.
    pub stride_ref_lines: u64,
    /// Instruction cost charged per software bounds check when a corpus is
    /// instrumented instead of protected by the plane.
    pub software_check_instrs: u64,
    /// Virtual base of the page-table array the TLB-miss client keys on.
    pub pt_base: u64,

    pub seed: u64,
    /// Clients in PMT-id order, as "name" or "name:mode" strings.
    pub clients: Vec<String>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            machine: MachineConfig::default(),
            phys_mem_bytes: 256 << 20,
            granularity_bytes: 512,
            mmc_entries: 128,
            mmc_hit_cycles: 1,
            mmc_mode: MmcMode::Shared,
            sticky_client: None,
            translation_mode: TranslationMode::Virtual,
            pmt_entry_bytes: 64,
            mmt_line_regions: 64,
            context_switch_cycles: 1000,
            flush_mmc_on_switch: true,
            traps_terminate: true,
            prefetch_buffer_lines: 32,
            prefetch_queue_len: 16,
            stride_ref_lines: 2,
            software_check_instrs: 2,
            pt_base: 128 << 20,
            seed: 1,
            clients: Vec::new(),
        }
    }
}

impl SimConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| ConfigError::new(format!("config is not valid JSON: {e}")))?;
        Self::from_value(value)
    }

    fn from_value(value: serde_json::Value) -> Result<Self, ConfigError> {
        if let Some(map) = value.as_object() {
            for key in map.keys() {
                if !Self::known_keys().iter().any(|k| k == key) {
                    return Err(ConfigError::new(format!("unknown config key \"{key}\"")));
                }
            }
        }
        let cfg: SimConfig = serde_json::from_value(value)
            .map_err(|e| ConfigError::new(format!("bad config value: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn known_keys() -> Vec<String> {
        // With the machine flattened in, serializing the default gives the
        // complete key set.
        match serde_json::to_value(SimConfig::default()) {
            Ok(serde_json::Value::Object(map)) => map.keys().cloned().collect(),
            _ => Vec::new(),
        }
    }

    /// Apply one `key=value` override. Values are parsed as JSON scalars
    /// with a plain-string fallback; `clients` takes a comma-separated
    /// list.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), ConfigError> {
        let mut value = serde_json::to_value(&*self)
            .map_err(|e| ConfigError::new(format!("config serialization failed: {e}")))?;
        let map = value
            .as_object_mut()
            .expect("config serializes to an object");
        if !map.contains_key(key) {
            return Err(ConfigError::new(format!("unknown config key \"{key}\"")));
        }
        let parsed = if key == "clients" {
            serde_json::Value::Array(
                raw.split(',')
                    .filter(|s| !s.is_empty())
                    .map(|s| serde_json::Value::String(s.trim().to_string()))
                    .collect(),
            )
        } else {
            serde_json::from_str(raw)
                .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()))
        };
        map.insert(key.to_string(), parsed);
        *self = Self::from_value(value)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.machine.validate()?;
        if !is_pow2(self.granularity_bytes) || self.granularity_bytes < 8 {
            return Err(ConfigError::new(
                "granularity_bytes must be a power of two, at least 8",
            ));
        }
        if !self.phys_mem_bytes.is_multiple_of(self.machine.page_bytes) {
            return Err(ConfigError::new(
                "phys_mem_bytes must be a whole number of pages",
            ));
        }
        if self.mmc_entries == 0 {
            return Err(ConfigError::new("mmc_entries must be positive"));
        }
        if self.pmt_entry_bytes == 0 {
            return Err(ConfigError::new("pmt_entry_bytes must be positive"));
        }
        if !is_pow2(self.mmt_line_regions) {
            return Err(ConfigError::new("mmt_line_regions must be a power of two"));
        }
        if self.clients.len() > 8 {
            return Err(ConfigError::new("at most 8 clients"));
        }
        self.parsed_clients()?;
        if let Some(id) = self.sticky_client {
            if id as usize >= self.clients.len().max(1) {
                return Err(ConfigError::new(format!(
                    "sticky_client {id} is not a configured client"
                )));
            }
        }
        Ok(())
    }

    pub fn parsed_clients(&self) -> Result<Vec<ClientSpec>, ConfigError> {
        self.clients.iter().map(|s| parse_client(s)).collect()
    }

    pub fn plane_params(&self, mmt_base_paddr: PAddr) -> PlaneParams {
        PlaneParams {
            mmt_base_paddr,
            phys_mem_bytes: self.phys_mem_bytes,
            granularity_bytes: self.granularity_bytes,
            mmc_entries: self.mmc_entries,
            mmc_hit_cycles: self.mmc_hit_cycles,
            mmc_mode: self.mmc_mode,
            sticky_client: self.sticky_client.map(ClientId),
            translation_mode: self.translation_mode,
            pmt_entry_bytes: self.pmt_entry_bytes,
            mmt_line_regions: self.mmt_line_regions,
        }
    }
}
