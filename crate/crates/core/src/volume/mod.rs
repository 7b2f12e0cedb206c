//! Per-level data volumes assembled from footprints.
//!
//! Estimation runs in two stages. [`measure_geometry`] enumerates footprints
//! of representative blocks and waves; it depends on the kernel and on the
//! machine's line sizes and occupancy, but not on cache capacities or fit
//! parameters. [`assemble`] applies capacities and miss-ratio fits to a
//! geometry, which is cheap enough to repeat for many machines.

mod l1;

use serde::Serialize;

use crate::fit::CalibrationInputs;
use crate::footprint::{
    blocks_per_sm, blocks_per_wave, build_waves_with, field_lines, representative_blocks, representative_waves,
    CollaborativeGroup, FieldLines, KindFilter,
};
use crate::kernel::{AccessKind, KernelDescriptor, LaunchConfig};
use crate::machine::MachineDescriptor;
use crate::{Error, Result};

pub use l1::{
    half_warp_cycles, l1_register_cycles, l1_register_cycles_with, AccessCycles, BankPolicy, L1CycleEstimate,
    HALF_WARP, WARP_SIZE,
};

/// Volumes of one level and kind, in bytes per LUP.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LevelVolumes {
    pub comp: f64,
    pub red: f64,
    pub cap: f64,
    pub up: f64,
    pub down: f64,
    pub alloc: f64,
}

impl LevelVolumes {
    /// `up` and `down` are derived so that `up = comp + red` and
    /// `down = comp + cap` hold exactly.
    pub fn new(comp: f64, red: f64, cap: f64, alloc: f64) -> Self {
        LevelVolumes {
            comp,
            red,
            cap,
            up: comp + red,
            down: comp + cap,
            alloc,
        }
    }

    fn sum<'a>(items: impl Iterator<Item = &'a LevelVolumes>) -> Self {
        let (mut comp, mut red, mut cap, mut alloc) = (0.0, 0.0, 0.0, 0.0);
        for v in items {
            comp += v.comp;
            red += v.red;
            cap += v.cap;
            alloc += v.alloc;
        }
        LevelVolumes::new(comp, red, cap, alloc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FieldVolumes {
    pub field: String,
    pub l2l1_load: LevelVolumes,
    pub l2l1_store: LevelVolumes,
    pub dram_load: LevelVolumes,
    pub dram_store: LevelVolumes,
}

/// Volumes per level and kind, all per LUP.
///
/// For DRAM loads, `comp` is the current wave's footprint minus its overlap
/// with the previous wave, `red` is the overlap plus the redundant L2 requests
/// (`redL2Load`), and `cap` is the overmiss share of the overlap plus the
/// capacity-miss share of the redundant requests.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct VolumeBreakdown {
    pub l2l1_load: LevelVolumes,
    pub l2l1_store: LevelVolumes,
    pub dram_load: LevelVolumes,
    pub dram_store: LevelVolumes,
    pub dram_curr: f64,
    pub dram_overlap: f64,
    pub overmiss_bytes: f64,
    pub red_l2_load: f64,
    pub red_l2_store: f64,
    pub l1_oversubscription: f64,
    pub l2_oversubscription: f64,
    pub coverage: Option<f64>,
    pub fields: Vec<FieldVolumes>,
}

impl VolumeBreakdown {
    pub fn dram_total(&self) -> f64 {
        self.dram_load.down + self.dram_store.down
    }

    pub fn l2l1_total(&self) -> f64 {
        self.l2l1_load.down + self.l2l1_store.down
    }

    /// DRAM load plus store traffic of the fields selected by `pred`.
    pub fn dram_bytes_where(&self, pred: impl Fn(&str) -> bool) -> f64 {
        self.fields
            .iter()
            .filter(|f| pred(&f.field))
            .map(|f| f.dram_load.down + f.dram_store.down)
            .sum()
    }

    pub fn calibration_inputs(&self, config_key: &str) -> CalibrationInputs {
        CalibrationInputs {
            config_key: config_key.into(),
            l1_oversubscription: self.l1_oversubscription,
            l2l1_load_comp: self.l2l1_load.comp,
            l2l1_load_red: self.l2l1_load.red,
            l2_oversubscription: self.l2_oversubscription,
            coverage: self.coverage,
            dram_load_comp: self.dram_load.comp,
            dram_overlap: self.dram_overlap,
            dram_load_red_l2: self.red_l2_load,
            dram_store_comp: self.dram_store.comp,
            dram_store_red: self.red_l2_store,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasureOptions {
    /// Representative thread blocks for the L1 group.
    pub l1_samples: usize,
    /// Representative waves for the L2 group.
    pub wave_samples: usize,
    /// Overrides the occupancy-derived wave size.
    pub blocks_per_wave: Option<u64>,
    pub bank_policy: BankPolicy,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        MeasureOptions {
            l1_samples: 5,
            wave_samples: 5,
            blocks_per_wave: None,
            bank_policy: BankPolicy::default(),
        }
    }
}

/// Block-level footprints averaged over samples, per field.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BlockGeometry {
    pub samples: usize,
    pub lups: f64,
    /// Unique load sectors, bytes per LUP.
    pub load_comp: Vec<f64>,
    /// Load sectors requested warp by warp, bytes per LUP.
    pub load_up: Vec<f64>,
    /// Unique load lines at allocation granularity, bytes per LUP.
    pub load_alloc: Vec<f64>,
    pub store_comp: Vec<f64>,
    pub store_up: Vec<f64>,
    /// Load allocation of one block in bytes.
    pub alloc_bytes: f64,
}

/// Wave-level footprints averaged over samples, per field.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct WaveGeometry {
    pub samples: usize,
    pub lups: f64,
    /// Unique load sectors of the current wave, bytes per LUP.
    pub curr: Vec<f64>,
    /// Load sectors shared with the previous wave, bytes per LUP.
    pub overlap: Vec<f64>,
    /// Unique store sectors, bytes per LUP.
    pub store: Vec<f64>,
    pub curr_bytes: f64,
    pub overlap_bytes: f64,
    pub store_bytes: f64,
    /// Load footprint of the previous wave; absent for single-wave grids.
    pub prev_bytes: Option<f64>,
}

/// Capacity-independent footprint data of one kernel launch.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Geometry {
    pub kernel: String,
    pub launch: LaunchConfig,
    pub fields: Vec<String>,
    pub blocks_per_sm: u64,
    pub blocks_per_wave: u64,
    pub wave_count: usize,
    pub block: BlockGeometry,
    pub wave: WaveGeometry,
    pub cycles: L1CycleEstimate,
    pub flops_per_lup: f64,
    pub minimal_bytes_per_lup: f64,
}

fn add_field_bytes(target: &mut [f64], lines: &[FieldLines], kind: AccessKind, g: u64, scale: f64) {
    for fl in lines.iter().filter(|fl| fl.kind == kind) {
        target[fl.field] += (fl.lines.len() * g) as f64 * scale;
    }
}

// Sectors requested warp by warp: every warp fetches each sector it touches once.
fn warp_sector_bytes(kernel: &KernelDescriptor, block: u64, sector: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let launch = &kernel.launch;
    let bases = kernel.base_map();
    let threads = CollaborativeGroup::block(block).threads(launch);
    let n = kernel.fields.len();
    let mut loads = vec![0.0; n];
    let mut stores = vec![0.0; n];
    let g = sector as i64;
    let mut buf = Vec::with_capacity(WARP_SIZE);
    for a in &kernel.accesses {
        let fi = kernel.field_index(&a.field).expect("validated kernel");
        let addrs = a.expr.bind(launch, &bases)?.eval_many(&threads)?;
        let mut sectors = 0u64;
        for warp in addrs.chunks(WARP_SIZE) {
            buf.clear();
            buf.extend(warp.iter().map(|x| x.div_euclid(g)));
            buf.sort_unstable();
            buf.dedup();
            sectors += buf.len() as u64;
        }
        let bytes = (sectors * sector * a.multiplicity as u64) as f64;
        match a.kind {
            AccessKind::Load => loads[fi] += bytes,
            AccessKind::Store => stores[fi] += bytes,
        }
    }
    Ok((loads, stores))
}

/// Enumerates representative blocks and waves.
pub fn measure_geometry(
    kernel: &KernelDescriptor,
    machine: &MachineDescriptor,
    opts: &MeasureOptions,
) -> Result<Geometry> {
    kernel.validate()?;
    machine.validate()?;
    if opts.l1_samples == 0 || opts.wave_samples == 0 {
        return Err(Error::Invalid("sample counts must be at least 1".into()));
    }
    let launch = &kernel.launch;
    let per_sm = blocks_per_sm(launch, machine)?;
    let per_wave = match opts.blocks_per_wave {
        Some(n) => n,
        None => blocks_per_wave(launch, machine)?,
    };
    let sector = machine.sector_bytes as u64;
    let line = machine.l1_line_bytes as u64;
    let n = kernel.fields.len();
    let lups_per_block = launch.lups_per_block() as f64;

    let blocks = representative_blocks(launch, opts.l1_samples);
    let inv = 1.0 / (blocks.len() as f64 * lups_per_block);
    let mut bg = BlockGeometry {
        samples: blocks.len(),
        lups: lups_per_block,
        load_comp: vec![0.0; n],
        load_up: vec![0.0; n],
        load_alloc: vec![0.0; n],
        store_comp: vec![0.0; n],
        store_up: vec![0.0; n],
        alloc_bytes: 0.0,
    };
    for &b in &blocks {
        let group = CollaborativeGroup::block(b);
        let sectors = field_lines(kernel, &group, sector, KindFilter::All)?;
        add_field_bytes(&mut bg.load_comp, &sectors, AccessKind::Load, sector, inv);
        add_field_bytes(&mut bg.store_comp, &sectors, AccessKind::Store, sector, inv);
        let lines = field_lines(kernel, &group, line, KindFilter::Loads)?;
        add_field_bytes(&mut bg.load_alloc, &lines, AccessKind::Load, line, inv);
        bg.alloc_bytes += lines.iter().map(|l| (l.lines.len() * line) as f64).sum::<f64>() / blocks.len() as f64;
        let (lu, su) = warp_sector_bytes(kernel, b, sector)?;
        for f in 0..n {
            bg.load_up[f] += lu[f] * inv;
            bg.store_up[f] += su[f] * inv;
        }
    }

    let waves = build_waves_with(launch, per_wave)?;
    let picks = representative_waves(&waves, opts.wave_samples);
    let s = picks.len() as f64;
    let mut wg = WaveGeometry {
        samples: picks.len(),
        lups: 0.0,
        curr: vec![0.0; n],
        overlap: vec![0.0; n],
        store: vec![0.0; n],
        curr_bytes: 0.0,
        overlap_bytes: 0.0,
        store_bytes: 0.0,
        prev_bytes: None,
    };
    let mut prev_total = 0.0;
    for &wi in &picks {
        let w = &waves[wi];
        let lups = w.len() as f64 * lups_per_block;
        wg.lups += lups / s;
        let curr = field_lines(kernel, &CollaborativeGroup::wave(w), sector, KindFilter::All)?;
        add_field_bytes(&mut wg.curr, &curr, AccessKind::Load, sector, 1.0 / (lups * s));
        add_field_bytes(&mut wg.store, &curr, AccessKind::Store, sector, 1.0 / (lups * s));
        for fl in &curr {
            let bytes = (fl.lines.len() * sector) as f64 / s;
            match fl.kind {
                AccessKind::Load => wg.curr_bytes += bytes,
                AccessKind::Store => wg.store_bytes += bytes,
            }
        }
        if wi > 0 {
            let prev = field_lines(kernel, &CollaborativeGroup::wave(&waves[wi - 1]), sector, KindFilter::Loads)?;
            prev_total += prev.iter().map(|p| (p.lines.len() * sector) as f64).sum::<f64>() / s;
            for fl in curr.iter().filter(|fl| fl.kind == AccessKind::Load) {
                if let Some(p) = prev.iter().find(|p| p.field == fl.field) {
                    let shared = (fl.lines.intersection_len(&p.lines) * sector) as f64;
                    wg.overlap[fl.field] += shared / (lups * s);
                    wg.overlap_bytes += shared / s;
                }
            }
        }
    }
    if waves.len() > 1 {
        wg.prev_bytes = Some(prev_total);
    }

    let cycles = l1_register_cycles_with(kernel, machine, blocks[0], opts.bank_policy)?;
    Ok(Geometry {
        kernel: kernel.name.clone(),
        launch: *launch,
        fields: kernel.fields.iter().map(|f| f.name.clone()).collect(),
        blocks_per_sm: per_sm,
        blocks_per_wave: per_wave,
        wave_count: waves.len(),
        block: bg,
        wave: wg,
        cycles,
        flops_per_lup: kernel.flops_per_lup,
        minimal_bytes_per_lup: kernel.minimal_bytes_per_lup(),
    })
}

/// Applies cache capacities and miss-ratio fits to a geometry.
pub fn assemble(geom: &Geometry, machine: &MachineDescriptor) -> VolumeBreakdown {
    let fits = &machine.fit_params;
    let l1_o = geom.block.alloc_bytes * geom.blocks_per_sm as f64 / machine.l1_capacity_bytes as f64;
    let l2_o = (geom.wave.curr_bytes + geom.wave.store_bytes) / machine.l2_capacity_bytes as f64;
    let coverage = geom.wave.prev_bytes.map(|prev| {
        if prev > 0.0 {
            (machine.l2_capacity_bytes as f64 - (geom.wave.curr_bytes - geom.wave.overlap_bytes)) / prev
        } else {
            0.0
        }
    });
    let r_l1 = fits.l1.miss_ratio(l1_o);
    let r_load = fits.l2_load.miss_ratio(l2_o);
    let r_store = fits.l2_store.miss_ratio(l2_o);
    let r_om = coverage.map_or(0.0, |c| fits.overmiss.miss_ratio(c));

    let mut fields = Vec::with_capacity(geom.fields.len());
    let (mut overlap, mut overmiss, mut red_l2_load, mut red_l2_store) = (0.0, 0.0, 0.0, 0.0);
    for (f, name) in geom.fields.iter().enumerate() {
        let b = &geom.block;
        let w = &geom.wave;
        let red = (b.load_up[f] - b.load_comp[f]).max(0.0);
        let l2l1_load = LevelVolumes::new(b.load_comp[f], red, r_l1 * red, b.load_alloc[f]);
        let sred = (b.store_up[f] - b.store_comp[f]).max(0.0);
        let l2l1_store = LevelVolumes::new(b.store_comp[f], sred, sred, b.store_comp[f]);

        let comp = (w.curr[f] - w.overlap[f]).max(0.0);
        let ov = w.curr[f] - comp;
        let red2 = (l2l1_load.down - w.curr[f]).max(0.0);
        let dram_load = LevelVolumes::new(comp, ov + red2, r_om * ov + r_load * red2, w.curr[f]);
        let sred2 = (l2l1_store.down - w.store[f]).max(0.0);
        let dram_store = LevelVolumes::new(w.store[f], sred2, r_store * sred2, w.store[f]);

        overlap += ov;
        overmiss += r_om * ov;
        red_l2_load += red2;
        red_l2_store += sred2;
        fields.push(FieldVolumes {
            field: name.clone(),
            l2l1_load,
            l2l1_store,
            dram_load,
            dram_store,
        });
    }
    VolumeBreakdown {
        l2l1_load: LevelVolumes::sum(fields.iter().map(|f| &f.l2l1_load)),
        l2l1_store: LevelVolumes::sum(fields.iter().map(|f| &f.l2l1_store)),
        dram_load: LevelVolumes::sum(fields.iter().map(|f| &f.dram_load)),
        dram_store: LevelVolumes::sum(fields.iter().map(|f| &f.dram_store)),
        dram_curr: geom.wave.curr.iter().sum(),
        dram_overlap: overlap,
        overmiss_bytes: overmiss,
        red_l2_load,
        red_l2_store,
        l1_oversubscription: l1_o,
        l2_oversubscription: l2_o,
        coverage,
        fields,
    }
}

/// L2 to L1 volumes of `kernel`.
pub fn l2_to_l1_volume(
    kernel: &KernelDescriptor,
    machine: &MachineDescriptor,
    opts: &MeasureOptions,
) -> Result<(LevelVolumes, LevelVolumes)> {
    let v = assemble(&measure_geometry(kernel, machine, opts)?, machine);
    Ok((v.l2l1_load, v.l2l1_store))
}

/// DRAM to L2 volumes of `kernel`.
pub fn dram_to_l2_volume(
    kernel: &KernelDescriptor,
    machine: &MachineDescriptor,
    opts: &MeasureOptions,
) -> Result<(LevelVolumes, LevelVolumes)> {
    let v = assemble(&measure_geometry(kernel, machine, opts)?, machine);
    Ok((v.dram_load, v.dram_store))
}
