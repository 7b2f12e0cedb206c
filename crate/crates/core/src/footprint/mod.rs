//! Unique data footprints of collaborative thread groups.
//!
//! A group (one thread block for L1, one wave for L2) evaluates every
//! access's address expression over all its threads. Addresses are mapped
//! to lines of the requested granularity and deduplicated per field and
//! access kind; distinct fields never alias.

mod lines;
mod oracle;
mod wave;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::expr::{BoundExpr, ExprError};
use crate::kernel::{AccessKind, KernelDescriptor, LaunchConfig};
use crate::{Error, Result};

pub use lines::LineSet;
pub use oracle::naive_footprint_oracle;
pub use wave::{
    blocks_per_sm, blocks_per_wave, build_waves, build_waves_with, representative_blocks,
    representative_waves, wave_overlap, Wave,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CacheLevel {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KindFilter {
    Loads,
    Stores,
    All,
}

impl KindFilter {
    pub fn accepts(self, kind: AccessKind) -> bool {
        match self {
            KindFilter::Loads => kind == AccessKind::Load,
            KindFilter::Stores => kind == AccessKind::Store,
            KindFilter::All => true,
        }
    }
}

/// A set of whole thread blocks sharing one cache level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollaborativeGroup {
    pub level: CacheLevel,
    /// Linear block indices (X-fastest).
    pub blocks: Vec<u64>,
}

impl CollaborativeGroup {
    pub fn block(linear: u64) -> Self {
        CollaborativeGroup {
            level: CacheLevel::L1,
            blocks: vec![linear],
        }
    }

    pub fn wave(wave: &Wave) -> Self {
        CollaborativeGroup {
            level: CacheLevel::L2,
            blocks: wave.blocks.clone().collect(),
        }
    }

    pub fn thread_count(&self, launch: &LaunchConfig) -> u64 {
        self.blocks.len() as u64 * launch.threads_per_block()
    }

    /// All thread coordinates of the group, block by block, X-fastest.
    pub fn threads(&self, launch: &LaunchConfig) -> Vec<crate::ThreadCoord> {
        let [bx, by, bz] = launch.block;
        let mut out = Vec::with_capacity(self.thread_count(launch) as usize);
        for &b in &self.blocks {
            let bid = launch.block_coords(b);
            for z in 0..bz {
                for y in 0..by {
                    for x in 0..bx {
                        out.push(crate::ThreadCoord::new([x, y, z], bid));
                    }
                }
            }
        }
        out
    }

    fn check(&self, launch: &LaunchConfig) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::Invalid("collaborative group has no blocks".into()));
        }
        let n = launch.block_count();
        if let Some(b) = self.blocks.iter().find(|&&b| b >= n) {
            return Err(Error::Invalid(format!("block {b} outside a grid of {n} blocks")));
        }
        Ok(())
    }
}

/// Footprint of one (field, kind) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FieldFootprint {
    pub field: String,
    pub kind: AccessKind,
    pub unique_lines: u64,
    pub unique_bytes: u64,
    /// Bytes requested by all executed accesses, counting repeats.
    pub total_access_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FootprintResult {
    pub granularity: u64,
    /// Ordered by field declaration, then kind.
    pub entries: Vec<FieldFootprint>,
}

impl FootprintResult {
    pub fn unique_lines(&self) -> u64 {
        self.entries.iter().map(|e| e.unique_lines).sum()
    }

    pub fn unique_bytes(&self) -> u64 {
        self.entries.iter().map(|e| e.unique_bytes).sum()
    }

    pub fn total_access_bytes(&self) -> u64 {
        self.entries.iter().map(|e| e.total_access_bytes).sum()
    }

    pub fn get(&self, field: &str, kind: AccessKind) -> Option<&FieldFootprint> {
        self.entries.iter().find(|e| e.field == field && e.kind == kind)
    }
}

/// Line set of one (field, kind) pair, as produced by the enumeration engine.
#[derive(Debug, Clone)]
pub struct FieldLines {
    pub field: usize,
    pub kind: AccessKind,
    pub lines: LineSet,
    pub total_access_bytes: u64,
}

/// Unique footprint of `group` at `granularity` bytes.
pub fn grid_iteration(
    kernel: &KernelDescriptor,
    group: &CollaborativeGroup,
    granularity: u64,
    filter: KindFilter,
) -> Result<FootprintResult> {
    let sets = field_lines(kernel, group, granularity, filter)?;
    Ok(FootprintResult {
        granularity,
        entries: sets
            .into_iter()
            .map(|s| FieldFootprint {
                field: kernel.fields[s.field].name.clone(),
                kind: s.kind,
                unique_lines: s.lines.len(),
                unique_bytes: s.lines.len() * granularity,
                total_access_bytes: s.total_access_bytes,
            })
            .collect(),
    })
}

/// Per-(field, kind) line sets for a group; the workhorse behind
/// [`grid_iteration`] and [`wave_overlap`].
pub fn field_lines(
    kernel: &KernelDescriptor,
    group: &CollaborativeGroup,
    granularity: u64,
    filter: KindFilter,
) -> Result<Vec<FieldLines>> {
    if granularity == 0 || granularity > i64::MAX as u64 {
        return Err(Error::Invalid(format!("granularity {granularity} out of range")));
    }
    let launch = &kernel.launch;
    group.check(launch)?;
    let bases = kernel.base_map();
    let g = granularity as i64;

    let mut by_key: BTreeMap<(usize, AccessKind), Vec<(BoundExpr, u32)>> = BTreeMap::new();
    for a in kernel.accesses.iter().filter(|a| filter.accepts(a.kind)) {
        let field = kernel
            .field_index(&a.field)
            .ok_or_else(|| Error::from(ExprError::UnknownField(a.field.clone())))?;
        let bound = a.expr.bind(launch, &bases)?;
        by_key.entry((field, a.kind)).or_default().push((bound, a.multiplicity));
    }

    let (lo, hi) = coord_box(launch, &group.blocks);
    let threads = group.thread_count(launch);
    let mut out = Vec::with_capacity(by_key.len());
    for ((field, kind), accesses) in by_key {
        let element = kernel.fields[field].element_size as u64;
        let total_access_bytes = accesses
            .iter()
            .map(|(_, m)| threads * *m as u64 * element)
            .sum();

        let mut range: Option<(i128, i128)> = Some((i128::MAX, i128::MIN));
        for (b, _) in &accesses {
            range = match (range, b.affine()) {
                (Some((mn, mx)), Some(af)) => {
                    let (l, h) = af.range_over(&lo, &hi);
                    Some((mn.min(l), mx.max(h)))
                }
                _ => None,
            };
        }
        let lines = match range {
            Some((mn, mx)) => {
                if mn < i64::MIN as i128 || mx > i64::MAX as i128 {
                    return Err(ExprError::Overflow.into());
                }
                let lo_line = (mn as i64).div_euclid(g);
                let hi_line = (mx as i64).div_euclid(g);
                let mut builder = lines::Builder::for_range(lo_line, hi_line, threads * accesses.len() as u64);
                for (b, _) in &accesses {
                    let af = b.affine().expect("checked affine");
                    enumerate_affine(launch, &group.blocks, af, g, &mut builder);
                }
                builder.finish()
            }
            None => {
                let mut builder = lines::Builder::sparse();
                for coord in group.threads(launch) {
                    let c = coord.as_array();
                    for (b, _) in &accesses {
                        builder.insert(b.eval(&c)?.div_euclid(g));
                    }
                }
                builder.finish()
            }
        };
        out.push(FieldLines {
            field,
            kind,
            lines,
            total_access_bytes,
        });
    }
    Ok(out)
}

// Coordinate bounds (tid and bid) covering every thread of the given blocks.
fn coord_box(launch: &LaunchConfig, blocks: &[u64]) -> ([i64; 6], [i64; 6]) {
    let mut lo = [0i64; 6];
    let mut hi = [0i64; 6];
    for i in 0..3 {
        hi[i] = launch.block[i] as i64 - 1;
        lo[3 + i] = i64::MAX;
        hi[3 + i] = i64::MIN;
    }
    for &b in blocks {
        let bid = launch.block_coords(b);
        for i in 0..3 {
            lo[3 + i] = lo[3 + i].min(bid[i] as i64);
            hi[3 + i] = hi[3 + i].max(bid[i] as i64);
        }
    }
    (lo, hi)
}

// Every address is known to fit in i64, so wrapping arithmetic is exact.
fn enumerate_affine(
    launch: &LaunchConfig,
    blocks: &[u64],
    af: &crate::expr::AffineForm,
    g: i64,
    builder: &mut lines::Builder,
) {
    let [bx, by, bz] = launch.block;
    let [cx, cy, cz, kx, ky, kz] = af.coeffs;
    let shift = if g.count_ones() == 1 { Some(g.trailing_zeros()) } else { None };
    for &b in blocks {
        let bid = launch.block_coords(b);
        let base = af
            .constant
            .wrapping_add(kx.wrapping_mul(bid[0] as i64))
            .wrapping_add(ky.wrapping_mul(bid[1] as i64))
            .wrapping_add(kz.wrapping_mul(bid[2] as i64));
        for z in 0..bz as i64 {
            let zb = base.wrapping_add(cz.wrapping_mul(z));
            for y in 0..by as i64 {
                let row = zb.wrapping_add(cy.wrapping_mul(y));
                match shift {
                    Some(s) => {
                        for x in 0..bx as i64 {
                            builder.insert(row.wrapping_add(cx.wrapping_mul(x)) >> s);
                        }
                    }
                    None => {
                        for x in 0..bx as i64 {
                            builder.insert(row.wrapping_add(cx.wrapping_mul(x)).div_euclid(g));
                        }
                    }
                }
            }
        }
    }
}
