//! Star stencil generator (`dst = sum of src at +-k along each axis`).

use super::{exact_blocks, Access, Field, Folding, KernelDescriptor, KernelError, LaunchConfig};
use crate::expr::{AddressExpr, Axis};

#[derive(Debug, Clone, PartialEq)]
pub struct StencilParams {
    /// Stencil radius.
    pub range: u32,
    /// Iteration space in lattice points. A z extent of 1 gives the 2D
    /// analog, a y extent of 1 as well gives the 1D one.
    pub grid: [u64; 3],
    pub block: [u32; 3],
    pub folding: Folding,
    /// Include the center point in the loads.
    pub center: bool,
    /// Row pitch of both fields in elements. Defaults to the x extent plus
    /// halo, rounded up to 16 elements.
    pub leading_dim: Option<u64>,
    pub element_size: u32,
}

impl StencilParams {
    /// The range-4 3D 25-point star stencil.
    pub fn range4(grid: [u64; 3], block: [u32; 3], folding: Folding) -> Self {
        StencilParams {
            range: 4,
            grid,
            block,
            folding,
            center: true,
            leading_dim: None,
            element_size: 8,
        }
    }

    fn active_axes(&self) -> Vec<Axis> {
        let mut axes = vec![Axis::X];
        if self.grid[1] > 1 {
            axes.push(Axis::Y);
        }
        if self.grid[2] > 1 {
            axes.push(Axis::Z);
        }
        axes
    }

    /// Relative offsets of all loads, center first.
    pub fn offsets(&self) -> Vec<[i64; 3]> {
        let mut out = Vec::new();
        if self.center {
            out.push([0, 0, 0]);
        }
        let r = self.range as i64;
        for axis in self.active_axes() {
            for k in 1..=r {
                for sign in [-1, 1] {
                    let mut o = [0; 3];
                    o[axis.index()] = sign * k;
                    out.push(o);
                }
            }
        }
        out
    }
}

/// Builds the star stencil descriptor. Both fields carry a halo of `range`
/// layers along y and z; the x halo lives in the row padding.
pub fn generate_star_stencil(p: &StencilParams) -> Result<KernelDescriptor, KernelError> {
    if p.range == 0 {
        return Err(KernelError::InvalidLaunch("stencil range must be at least 1".into()));
    }
    let r = p.range as u64;
    let halo = [
        r,
        if p.grid[1] > 1 { r } else { 0 },
        if p.grid[2] > 1 { r } else { 0 },
    ];
    let min_pitch = p.grid[0] + 2 * r;
    let pitch = match p.leading_dim {
        Some(ld) if ld < min_pitch => {
            return Err(KernelError::InvalidField {
                field: "src".into(),
                reason: format!("leading dimension {ld} smaller than x extent plus halo {min_pitch}"),
            })
        }
        Some(ld) => ld,
        None => min_pitch.div_ceil(16) * 16,
    };
    let dims = [pitch, p.grid[1] + 2 * halo[1], p.grid[2] + 2 * halo[2]];
    let src = Field::dense("src", p.element_size, dims);
    let dst = Field::dense("dst", p.element_size, dims);

    let fold = p.folding.factors();
    let mut grid = [0u32; 3];
    for (i, axis) in ['x', 'y', 'z'].into_iter().enumerate() {
        grid[i] = exact_blocks(axis, p.grid[i], p.block[i] as u64 * fold[i] as u64)?;
    }
    let launch = LaunchConfig::new(p.block, grid, p.folding.work_per_thread());

    let es = p.element_size as i64;
    let row = src.strides[1] / es;
    let plane = src.strides[2] / es;
    let mut accesses = Vec::new();
    for it in folded_iterations(p.folding) {
        let point = |off: [i64; 3]| -> AddressExpr {
            let coord = |axis: Axis| {
                let i = axis.index();
                let g = if fold[i] > 1 {
                    AddressExpr::global_index(axis) * fold[i] as i64 + it[i]
                } else {
                    AddressExpr::global_index(axis)
                };
                g + (off[i] + halo[i] as i64)
            };
            (coord(Axis::X) + coord(Axis::Y) * row + coord(Axis::Z) * plane) * es
        };
        for off in p.offsets() {
            accesses.push(Access::load("src", AddressExpr::base("src") + point(off)));
        }
        accesses.push(Access::store("dst", AddressExpr::base("dst") + point([0, 0, 0])));
    }

    let k = KernelDescriptor {
        name: format!("star{}d_r{}", 1 + (p.grid[1] > 1) as u8 + (p.grid[2] > 1) as u8, p.range),
        fields: vec![src, dst],
        accesses,
        launch,
        flops_per_lup: p.offsets().len() as f64,
    };
    k.validate()?;
    Ok(k)
}

/// Intra-thread offsets of the folded iterations.
pub(crate) fn folded_iterations(folding: Folding) -> Vec<[i64; 3]> {
    let f = folding.factors();
    let mut out = Vec::new();
    for z in 0..f[2] as i64 {
        for y in 0..f[1] as i64 {
            for x in 0..f[0] as i64 {
                out.push([x, y, z]);
            }
        }
    }
    out
}
