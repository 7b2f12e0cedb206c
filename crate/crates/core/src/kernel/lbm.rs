//! D3Q15 lattice Boltzmann access pattern with a finite-difference phase field.
//!
//! Only the memory accesses are modeled: each cell pulls 15 distribution
//! values from its upwind neighbors, writes 15 values in place, and reads
//! the phase field at the cell and its six face neighbors.

use super::{exact_blocks, Access, Field, KernelDescriptor, KernelError, LaunchConfig};
use crate::expr::{AddressExpr, Axis};

/// Flops per lattice update shipped with the generator. Not a measured value.
pub const DEFAULT_LBM_FLOPS_PER_LUP: f64 = 200.0;

/// The 15 lattice velocities: rest, 6 faces, 8 corners.
pub fn d3q15_directions() -> Vec<[i64; 3]> {
    let mut dirs = vec![[0, 0, 0]];
    for axis in 0..3 {
        for s in [-1, 1] {
            let mut d = [0; 3];
            d[axis] = s;
            dirs.push(d);
        }
    }
    for z in [-1, 1] {
        for y in [-1, 1] {
            for x in [-1, 1] {
                dirs.push([x, y, z]);
            }
        }
    }
    dirs
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbmParams {
    pub grid: [u64; 3],
    pub block: [u32; 3],
    pub flops_per_lup: f64,
}

impl LbmParams {
    pub fn new(grid: [u64; 3], block: [u32; 3]) -> Self {
        LbmParams {
            grid,
            block,
            flops_per_lup: DEFAULT_LBM_FLOPS_PER_LUP,
        }
    }
}

/// One field per distribution direction for source and destination, plus the
/// phase field. All fields share a layout with one ghost layer in y and z.
pub fn generate_lbm_d3q15(p: &LbmParams) -> Result<KernelDescriptor, KernelError> {
    let pitch = (p.grid[0] + 2).div_ceil(16) * 16;
    let dims = [pitch, p.grid[1] + 2, p.grid[2] + 2];
    let mut grid = [0u32; 3];
    for (i, axis) in ['x', 'y', 'z'].into_iter().enumerate() {
        grid[i] = exact_blocks(axis, p.grid[i], p.block[i] as u64)?;
    }
    let launch = LaunchConfig::new(p.block, grid, 1);

    let es = 8i64;
    let row = pitch as i64;
    let plane = row * dims[1] as i64;
    let at = |field: &str, off: [i64; 3]| {
        let c = |axis: Axis, ghost: i64| AddressExpr::global_index(axis) + (off[axis.index()] + ghost);
        AddressExpr::base(field) + (c(Axis::X, 0) + c(Axis::Y, 1) * row + c(Axis::Z, 1) * plane) * es
    };

    let mut fields = Vec::new();
    let mut accesses = Vec::new();
    let dirs = d3q15_directions();
    for (q, c) in dirs.iter().enumerate() {
        let name = format!("pdf_src_{q}");
        fields.push(Field::dense(&name, 8, dims));
        accesses.push(Access::load(&name, at(&name, [-c[0], -c[1], -c[2]])));
    }
    for q in 0..dirs.len() {
        let name = format!("pdf_dst_{q}");
        fields.push(Field::dense(&name, 8, dims));
        accesses.push(Access::store(&name, at(&name, [0, 0, 0])));
    }
    fields.push(Field::dense("phi", 8, dims));
    accesses.push(Access::load("phi", at("phi", [0, 0, 0])));
    for axis in 0..3 {
        for s in [-1, 1] {
            let mut o = [0; 3];
            o[axis] = s;
            accesses.push(Access::load("phi", at("phi", o)));
        }
    }

    let k = KernelDescriptor {
        name: "lbm_d3q15".into(),
        fields,
        accesses,
        launch,
        flops_per_lup: p.flops_per_lup,
    };
    k.validate()?;
    Ok(k)
}

/// True for the distribution-function fields of the LBM generator.
pub fn is_pdf_field(name: &str) -> bool {
    name.starts_with("pdf_")
}
