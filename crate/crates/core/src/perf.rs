//! Four-limiter bottleneck model: DRAM bandwidth, L2 bandwidth, L1 to
//! register throughput, and floating-point peak.

use std::fmt;

use serde::Serialize;

use crate::machine::MachineDescriptor;
use crate::volume::{L1CycleEstimate, VolumeBreakdown};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Limiter {
    Dram,
    L2,
    L1,
    Fp,
}

impl Limiter {
    pub const ALL: [Limiter; 4] = [Limiter::Dram, Limiter::L2, Limiter::L1, Limiter::Fp];
}

impl fmt::Display for Limiter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Limiter::Dram => "dram",
            Limiter::L2 => "l2",
            Limiter::L1 => "l1",
            Limiter::Fp => "fp",
        })
    }
}

/// Machine-wide seconds per LUP for each limiter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PerfPrediction {
    pub t_dram: f64,
    pub t_l2: f64,
    pub t_l1: f64,
    pub t_fp: f64,
    pub limiter: Limiter,
    pub predicted_glups: f64,
}

impl PerfPrediction {
    pub fn time(&self, limiter: Limiter) -> f64 {
        match limiter {
            Limiter::Dram => self.t_dram,
            Limiter::L2 => self.t_l2,
            Limiter::L1 => self.t_l1,
            Limiter::Fp => self.t_fp,
        }
    }
}

/// Slowest limiter wins; ties go to the earlier entry.
pub fn bottleneck<L: Copy + fmt::Display>(times: &[(L, f64)]) -> Result<(L, f64)> {
    let mut best: Option<(L, f64)> = None;
    for &(l, t) in times {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Invalid(format!("{l} time {t} is not a finite non-negative number")));
        }
        if best.map_or(true, |(_, bt)| t > bt) {
            best = Some((l, t));
        }
    }
    match best {
        Some((l, t)) if t > 0.0 => Ok((l, t)),
        _ => Err(Error::Invalid("every limiter time is zero".into())),
    }
}

pub fn predict(
    flops_per_lup: f64,
    machine: &MachineDescriptor,
    volumes: &VolumeBreakdown,
    cycles: &L1CycleEstimate,
) -> Result<PerfPrediction> {
    machine.validate()?;
    let t_dram = volumes.dram_total() / (machine.mem_bandwidth_gbps * 1e9);
    let t_l2 = volumes.l2l1_total() / (machine.l2_bandwidth_gbps * 1e9);
    let t_l1 = cycles.cycles_per_lup() / (machine.sm_count as f64 * machine.clock_hz());
    let t_fp = flops_per_lup / machine.peak_flops();
    let (limiter, t) = bottleneck(&[
        (Limiter::Dram, t_dram),
        (Limiter::L2, t_l2),
        (Limiter::L1, t_l1),
        (Limiter::Fp, t_fp),
    ])?;
    Ok(PerfPrediction {
        t_dram,
        t_l2,
        t_l1,
        t_fp,
        limiter,
        predicted_glups: 1e-9 / t,
    })
}
