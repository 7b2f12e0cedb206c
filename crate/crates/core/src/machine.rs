//! GPU machine descriptors.
//!
//! Occupancy limits (`maxThreadsPerSM`, `maxBlocksPerSM`) and the machine
//! balance are ordinary config values: edit the machine file to change them.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fit::FitSet;

#[derive(Debug, Error)]
pub enum MachineError {
    #[error("machine field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("cannot read machine file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("machine file is not valid: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct MachineDescriptor {
    pub name: String,
    pub sm_count: u32,
    pub clock_ghz: f64,
    /// L1 capacity per SM.
    pub l1_capacity_bytes: u64,
    /// Chip-wide L2 capacity.
    pub l2_capacity_bytes: u64,
    /// L1 allocation granularity.
    pub l1_line_bytes: u32,
    /// Transfer granularity between L1, L2 and DRAM.
    pub sector_bytes: u32,
    pub l1_banks: u32,
    pub bank_width_bytes: u32,
    pub mem_bandwidth_gbps: f64,
    pub l2_bandwidth_gbps: f64,
    pub max_threads_per_sm: u32,
    pub max_blocks_per_sm: u32,
    pub max_threads_per_block: u32,
    /// Peak flops per byte of DRAM bandwidth for the kernel's instruction mix.
    pub machine_balance_flop_per_byte: f64,
    pub fit_params: FitSet,
}

impl MachineDescriptor {
    /// Tesla V100 (80 SMs at 1.38 GHz, 128 KiB L1, 6 MiB L2).
    pub fn v100() -> Self {
        MachineDescriptor {
            name: "v100".into(),
            sm_count: 80,
            clock_ghz: 1.38,
            l1_capacity_bytes: 128 * 1024,
            l2_capacity_bytes: 6 * 1024 * 1024,
            l1_line_bytes: 128,
            sector_bytes: 32,
            l1_banks: 16,
            bank_width_bytes: 8,
            mem_bandwidth_gbps: 790.0,
            l2_bandwidth_gbps: 2500.0,
            max_threads_per_sm: 2048,
            max_blocks_per_sm: 32,
            max_threads_per_block: 1024,
            machine_balance_flop_per_byte: 4.0,
            fit_params: FitSet::illustrative(),
        }
    }

    /// Built-in machine by name.
    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "v100" => Some(Self::v100()),
            _ => None,
        }
    }

    pub fn with_fits(mut self, fits: FitSet) -> Self {
        self.fit_params = fits;
        self
    }

    pub fn validate(&self) -> Result<(), MachineError> {
        fn positive_u(field: &'static str, v: u64) -> Result<(), MachineError> {
            if v == 0 {
                return Err(MachineError::Invalid {
                    field,
                    reason: "must be positive".into(),
                });
            }
            Ok(())
        }
        fn positive_f(field: &'static str, v: f64) -> Result<(), MachineError> {
            if !(v.is_finite() && v > 0.0) {
                return Err(MachineError::Invalid {
                    field,
                    reason: format!("must be a positive finite number, got {v}"),
                });
            }
            Ok(())
        }
        positive_u("smCount", self.sm_count as u64)?;
        positive_f("clockGhz", self.clock_ghz)?;
        positive_u("l1CapacityBytes", self.l1_capacity_bytes)?;
        positive_u("l2CapacityBytes", self.l2_capacity_bytes)?;
        positive_u("l1LineBytes", self.l1_line_bytes as u64)?;
        positive_u("sectorBytes", self.sector_bytes as u64)?;
        positive_u("l1Banks", self.l1_banks as u64)?;
        positive_u("bankWidthBytes", self.bank_width_bytes as u64)?;
        positive_f("memBandwidthGbps", self.mem_bandwidth_gbps)?;
        positive_f("l2BandwidthGbps", self.l2_bandwidth_gbps)?;
        positive_u("maxThreadsPerSm", self.max_threads_per_sm as u64)?;
        positive_u("maxBlocksPerSm", self.max_blocks_per_sm as u64)?;
        positive_u("maxThreadsPerBlock", self.max_threads_per_block as u64)?;
        positive_f("machineBalanceFlopPerByte", self.machine_balance_flop_per_byte)?;
        if self.l1_line_bytes % self.sector_bytes != 0 {
            return Err(MachineError::Invalid {
                field: "l1LineBytes",
                reason: format!(
                    "{} is not a multiple of the sector size {}",
                    self.l1_line_bytes, self.sector_bytes
                ),
            });
        }
        if self.max_threads_per_block > self.max_threads_per_sm {
            return Err(MachineError::Invalid {
                field: "maxThreadsPerBlock",
                reason: "exceeds maxThreadsPerSm".into(),
            });
        }
        self.fit_params.validate().map_err(|e| MachineError::Invalid {
            field: "fitParams",
            reason: e.to_string(),
        })?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, MachineError> {
        let m: MachineDescriptor = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("machine serializes")
    }

    /// Peak floating-point rate in flop/s implied by the machine balance.
    pub fn peak_flops(&self) -> f64 {
        self.machine_balance_flop_per_byte * self.mem_bandwidth_gbps * 1e9
    }

    pub fn clock_hz(&self) -> f64 {
        self.clock_ghz * 1e9
    }
}

/// Reads and validates a machine file.
pub fn load_machine(path: impl AsRef<Path>) -> Result<MachineDescriptor, MachineError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| MachineError::Io {
        path: path.display().to_string(),
        source,
    })?;
    MachineDescriptor::from_json(&text)
}
