//! End-to-end estimates, kernel families, and sweep ranking.

use std::io;

use rayon::prelude::*;
use serde::Serialize;

use crate::kernel::{
    generate_lbm_d3q15, generate_star_stencil, Folding, KernelDescriptor, LaunchConfig, LbmParams, StencilParams,
    SweepConfig, SweepConstraints,
};
use crate::machine::MachineDescriptor;
use crate::perf::{predict, PerfPrediction};
use crate::volume::{assemble, measure_geometry, Geometry, L1CycleEstimate, LevelVolumes, MeasureOptions, VolumeBreakdown};
use crate::{Error, Result};

pub type EstimateOptions = MeasureOptions;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Estimate {
    pub kernel: String,
    pub launch: LaunchConfig,
    pub blocks_per_wave: u64,
    pub wave_count: usize,
    pub flops_per_lup: f64,
    pub minimal_bytes_per_lup: f64,
    pub volumes: VolumeBreakdown,
    pub cycles: L1CycleEstimate,
    pub perf: PerfPrediction,
}

pub fn estimate(kernel: &KernelDescriptor, machine: &MachineDescriptor, opts: &EstimateOptions) -> Result<Estimate> {
    finish(&measure_geometry(kernel, machine, opts)?, machine)
}

/// Completes an estimate from a previously measured geometry.
pub fn finish(geom: &Geometry, machine: &MachineDescriptor) -> Result<Estimate> {
    let volumes = assemble(geom, machine);
    let perf = predict(geom.flops_per_lup, machine, &volumes, &geom.cycles)?;
    Ok(Estimate {
        kernel: geom.kernel.clone(),
        launch: geom.launch,
        blocks_per_wave: geom.blocks_per_wave,
        wave_count: geom.wave_count,
        flops_per_lup: geom.flops_per_lup,
        minimal_bytes_per_lup: geom.minimal_bytes_per_lup,
        volumes,
        cycles: geom.cycles.clone(),
        perf,
    })
}

/// A kernel that can be re-instantiated for different block shapes.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelFamily {
    Stencil(StencilParams),
    Lbm(LbmParams),
    /// A fixed descriptor; its iteration space is the launch's thread grid.
    Custom(KernelDescriptor),
}

fn round_up(v: u64, m: u64) -> u64 {
    v.div_ceil(m) * m
}

impl KernelFamily {
    pub fn name(&self) -> &str {
        match self {
            KernelFamily::Stencil(_) => "stencil",
            KernelFamily::Lbm(_) => "lbm",
            KernelFamily::Custom(k) => &k.name,
        }
    }

    /// Threads per block of the family's sweep.
    pub fn sweep_threads(&self) -> u32 {
        match self {
            KernelFamily::Lbm(_) => 512,
            _ => 1024,
        }
    }

    pub fn sweep_constraints(&self) -> SweepConstraints {
        match self {
            KernelFamily::Stencil(_) => SweepConstraints::stencil(),
            _ => SweepConstraints::lbm(),
        }
    }

    /// Descriptor for `config` on the family's exact grid; the grid must
    /// tile by the block.
    pub fn instantiate_exact(&self, config: &SweepConfig) -> Result<KernelDescriptor> {
        self.build(config, false)
    }

    /// Descriptor for `config`, rounding each grid extent up to a multiple
    /// of the block extent (times the folding factor).
    pub fn instantiate(&self, config: &SweepConfig) -> Result<KernelDescriptor> {
        self.build(config, true)
    }

    fn build(&self, config: &SweepConfig, round: bool) -> Result<KernelDescriptor> {
        if config.block.iter().any(|&b| b == 0) {
            return Err(Error::Invalid("block extents must be at least 1".into()));
        }
        let fold = config.folding.factors();
        let fit = |grid: [u64; 3]| -> [u64; 3] {
            if !round {
                return grid;
            }
            let mut g = grid;
            for i in 0..3 {
                g[i] = round_up(grid[i], config.block[i] as u64 * fold[i] as u64);
            }
            g
        };
        match self {
            KernelFamily::Stencil(p) => {
                require_powers_of_two(config)?;
                let params = StencilParams {
                    grid: fit(p.grid),
                    block: config.block,
                    folding: config.folding,
                    ..p.clone()
                };
                Ok(generate_star_stencil(&params)?)
            }
            KernelFamily::Lbm(p) => {
                require_powers_of_two(config)?;
                no_folding(config)?;
                let params = LbmParams {
                    grid: fit(p.grid),
                    block: config.block,
                    flops_per_lup: p.flops_per_lup,
                };
                Ok(generate_lbm_d3q15(&params)?)
            }
            KernelFamily::Custom(k) => {
                no_folding(config)?;
                let mut grid = [0u32; 3];
                for i in 0..3 {
                    let extent = k.launch.grid[i] as u64 * k.launch.block[i] as u64;
                    let b = config.block[i] as u64;
                    if !round && extent % b != 0 {
                        return Err(crate::kernel::KernelError::NotDivisible {
                            axis: ['x', 'y', 'z'][i],
                            extent,
                            block: b,
                        }
                        .into());
                    }
                    grid[i] = u32::try_from(extent.div_ceil(b))
                        .map_err(|_| Error::Invalid("grid exceeds 32 bits".into()))?;
                }
                let launch = LaunchConfig::new(config.block, grid, k.launch.work_per_thread);
                let out = k.with_launch(launch);
                out.validate()?;
                Ok(out)
            }
        }
    }
}

fn require_powers_of_two(config: &SweepConfig) -> Result<()> {
    if config.block.iter().all(|b| b.is_power_of_two()) {
        Ok(())
    } else {
        Err(Error::Invalid(format!(
            "built-in generators need power-of-two block extents, got {:?}",
            config.block
        )))
    }
}

fn no_folding(config: &SweepConfig) -> Result<()> {
    if config.folding == Folding::None {
        Ok(())
    } else {
        Err(Error::Invalid(format!(
            "thread folding `{}` is only available for the stencil generator",
            config.folding
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RankedConfig {
    pub config: SweepConfig,
    pub estimate: Estimate,
}

/// Geometries for every configuration, in input order. Runs in parallel.
pub fn sweep_geometries(
    family: &KernelFamily,
    configs: &[SweepConfig],
    machine: &MachineDescriptor,
    opts: &MeasureOptions,
) -> Result<Vec<(SweepConfig, Geometry)>> {
    configs
        .par_iter()
        .map(|c| {
            let k = family.instantiate(c)?;
            Ok((*c, measure_geometry(&k, machine, opts)?))
        })
        .collect()
}

/// Estimates from precomputed geometries, best first.
pub fn rank_geometries(geoms: &[(SweepConfig, Geometry)], machine: &MachineDescriptor) -> Result<Vec<RankedConfig>> {
    let mut rows = geoms
        .iter()
        .map(|(c, g)| {
            Ok(RankedConfig {
                config: *c,
                estimate: finish(g, machine)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| {
        b.estimate
            .perf
            .predicted_glups
            .total_cmp(&a.estimate.perf.predicted_glups)
            .then_with(|| a.config.cmp(&b.config))
    });
    Ok(rows)
}

/// Estimates every configuration and orders them by predicted throughput,
/// highest first; ties are broken by the configuration tuple.
pub fn rank_sweep(
    family: &KernelFamily,
    configs: &[SweepConfig],
    machine: &MachineDescriptor,
    opts: &MeasureOptions,
) -> Result<Vec<RankedConfig>> {
    if configs.is_empty() {
        return Err(Error::Invalid("sweep has no configurations".into()));
    }
    rank_geometries(&sweep_geometries(family, configs, machine, opts)?, machine)
}

/// One ranking CSV row. Column names double as calibration inputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RankingRecord {
    pub rank: usize,
    pub config_key: String,
    pub block_x: u32,
    pub block_y: u32,
    pub block_z: u32,
    pub folding: Folding,
    pub l2l1_load_comp: f64,
    pub l2l1_load_red: f64,
    pub l2l1_load_down: f64,
    pub l2l1_store_down: f64,
    pub dram_load_comp: f64,
    pub dram_load_down: f64,
    pub dram_store_comp: f64,
    pub dram_store_down: f64,
    pub dram_overlap: f64,
    pub dram_load_red_l2: f64,
    pub dram_store_red: f64,
    pub l1_oversubscription: f64,
    pub l2_oversubscription: f64,
    pub coverage: Option<f64>,
    pub l1_cycles_per_lup_per_warp: f64,
    pub t_dram: f64,
    pub t_l2: f64,
    pub t_l1: f64,
    pub t_fp: f64,
    pub limiter: crate::perf::Limiter,
    pub predicted_glups: f64,
}

impl RankingRecord {
    pub fn new(rank: usize, row: &RankedConfig) -> Self {
        let v = &row.estimate.volumes;
        let p = &row.estimate.perf;
        RankingRecord {
            rank,
            config_key: row.config.key(),
            block_x: row.config.block[0],
            block_y: row.config.block[1],
            block_z: row.config.block[2],
            folding: row.config.folding,
            l2l1_load_comp: v.l2l1_load.comp,
            l2l1_load_red: v.l2l1_load.red,
            l2l1_load_down: v.l2l1_load.down,
            l2l1_store_down: v.l2l1_store.down,
            dram_load_comp: v.dram_load.comp,
            dram_load_down: v.dram_load.down,
            dram_store_comp: v.dram_store.comp,
            dram_store_down: v.dram_store.down,
            dram_overlap: v.dram_overlap,
            dram_load_red_l2: v.red_l2_load,
            dram_store_red: v.red_l2_store,
            l1_oversubscription: v.l1_oversubscription,
            l2_oversubscription: v.l2_oversubscription,
            coverage: v.coverage,
            l1_cycles_per_lup_per_warp: row.estimate.cycles.cycles_per_lup_per_warp,
            t_dram: p.t_dram,
            t_l2: p.t_l2,
            t_l1: p.t_l1,
            t_fp: p.t_fp,
            limiter: p.limiter,
            predicted_glups: p.predicted_glups,
        }
    }
}

pub fn write_ranking_csv(rows: &[RankedConfig], writer: impl io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (i, r) in rows.iter().enumerate() {
        w.serialize(RankingRecord::new(i + 1, r))?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<output>".into(),
        source: e,
    })
}

/// One volume CSV row per level and kind.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct VolumeRecord {
    pub config_key: String,
    pub level: &'static str,
    pub kind: &'static str,
    pub comp: f64,
    pub red: f64,
    pub cap: f64,
    pub up: f64,
    pub down: f64,
    pub alloc: f64,
}

pub fn volume_records(config_key: &str, v: &VolumeBreakdown) -> Vec<VolumeRecord> {
    let row = |level, kind, l: &LevelVolumes| VolumeRecord {
        config_key: config_key.into(),
        level,
        kind,
        comp: l.comp,
        red: l.red,
        cap: l.cap,
        up: l.up,
        down: l.down,
        alloc: l.alloc,
    };
    vec![
        row("l2l1", "load", &v.l2l1_load),
        row("l2l1", "store", &v.l2l1_store),
        row("dram", "load", &v.dram_load),
        row("dram", "store", &v.dram_store),
    ]
}
