//! Kernel descriptors: fields, memory accesses, and launch configuration.
//!
//! A [`KernelDescriptor`] is everything the estimator knows about a kernel.
//! Boundary guards are not represented; the launch grid must tile the
//! iteration space exactly.

mod lbm;
mod spec_file;
mod stencil;
mod sweep;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{parse::is_reserved, AddressExpr, BaseMap, ExprError};

pub use lbm::{d3q15_directions, generate_lbm_d3q15, is_pdf_field, LbmParams, DEFAULT_LBM_FLOPS_PER_LUP};
pub use spec_file::{KernelSpecFile, SCHEMA_VERSION};
pub use stencil::{generate_star_stencil, StencilParams};
pub use sweep::{enumerate_sweep, SweepConfig, SweepConstraints, ThreadCount};

/// Alignment offsets below this are rejected.
pub const LARGEST_LINE_BYTES: i64 = 128;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("invalid field `{field}`: {reason}")]
    InvalidField { field: String, reason: String },
    #[error("access #{index} to `{field}`: {reason}")]
    InvalidAccess {
        index: usize,
        field: String,
        reason: String,
    },
    #[error("invalid launch configuration: {0}")]
    InvalidLaunch(String),
    #[error("grid extent {extent} along {axis} is not divisible by the block extent {block}")]
    NotDivisible {
        axis: char,
        extent: u64,
        block: u64,
    },
    #[error("kernel has no accesses")]
    NoAccesses,
    #[error("flopsPerLup must be a finite non-negative number, got {0}")]
    InvalidFlops(f64),
    #[error("unsupported schemaVersion {0}")]
    SchemaVersion(u32),
    #[error("expression `{text}`: {source}")]
    Expr {
        text: String,
        #[source]
        source: ExprError,
    },
    #[error("kernel spec is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessKind {
    Load,
    Store,
}

impl fmt::Display for AccessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccessKind::Load => "load",
            AccessKind::Store => "store",
        })
    }
}

/// An array in device memory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Field {
    pub name: String,
    pub element_size: u32,
    /// Extents in elements, innermost first. Unused dimensions are 1.
    pub dims: [u64; 3],
    /// Byte offset substituted for the field's base address.
    #[serde(default)]
    pub alignment: i64,
    /// Bytes per step along each dimension.
    pub strides: [i64; 3],
}

impl Field {
    /// Dense field with no padding.
    pub fn dense(name: impl Into<String>, element_size: u32, dims: [u64; 3]) -> Self {
        let es = element_size as i64;
        Field {
            name: name.into(),
            element_size,
            dims,
            alignment: 0,
            strides: [es, es * dims[0] as i64, es * (dims[0] * dims[1]) as i64],
        }
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        let bad = |reason: String| KernelError::InvalidField {
            field: self.name.clone(),
            reason,
        };
        if self.name.is_empty()
            || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
            || self.name.starts_with(|c: char| c.is_ascii_digit())
        {
            return Err(bad("name must be an identifier".into()));
        }
        if is_reserved(&self.name) {
            return Err(bad("name collides with a reserved identifier".into()));
        }
        if !matches!(self.element_size, 4 | 8) {
            return Err(bad(format!("element size must be 4 or 8, got {}", self.element_size)));
        }
        if self.dims.iter().any(|&d| d == 0) {
            return Err(bad("extents must be at least 1".into()));
        }
        if self.strides[0] != self.element_size as i64 {
            return Err(bad("innermost stride must equal the element size".into()));
        }
        for d in 1..3 {
            let min = self.strides[d - 1] as i128 * self.dims[d - 1] as i128;
            if (self.strides[d] as i128) < min {
                return Err(bad(format!(
                    "stride {} along dimension {d} is smaller than the extent below it ({min})",
                    self.strides[d]
                )));
            }
        }
        if self.alignment < -LARGEST_LINE_BYTES {
            return Err(bad(format!("alignment {} below -{LARGEST_LINE_BYTES}", self.alignment)));
        }
        Ok(())
    }
}

/// A single memory access executed once per thread (times `multiplicity`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Access {
    pub field: String,
    pub kind: AccessKind,
    pub expr: AddressExpr,
    pub multiplicity: u32,
}

impl Access {
    pub fn load(field: impl Into<String>, expr: AddressExpr) -> Self {
        Access {
            field: field.into(),
            kind: AccessKind::Load,
            expr,
            multiplicity: 1,
        }
    }

    pub fn store(field: impl Into<String>, expr: AddressExpr) -> Self {
        Access {
            field: field.into(),
            kind: AccessKind::Store,
            expr,
            multiplicity: 1,
        }
    }
}

/// Block shape, grid shape (in blocks), and lattice updates per thread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LaunchConfig {
    pub block: [u32; 3],
    pub grid: [u32; 3],
    #[serde(default = "one")]
    pub work_per_thread: u32,
}

fn one() -> u32 {
    1
}

impl LaunchConfig {
    pub fn new(block: [u32; 3], grid: [u32; 3], work_per_thread: u32) -> Self {
        LaunchConfig {
            block,
            grid,
            work_per_thread,
        }
    }

    pub fn threads_per_block(&self) -> u64 {
        self.block.iter().map(|&b| b as u64).product()
    }

    pub fn block_count(&self) -> u64 {
        self.grid.iter().map(|&g| g as u64).product()
    }

    pub fn total_threads(&self) -> u64 {
        self.threads_per_block() * self.block_count()
    }

    /// Lattice updates performed by one block.
    pub fn lups_per_block(&self) -> u64 {
        self.threads_per_block() * self.work_per_thread as u64
    }

    /// Block coordinates for a linear block index in X-fastest order.
    pub fn block_coords(&self, linear: u64) -> [u32; 3] {
        let gx = self.grid[0] as u64;
        let gy = self.grid[1] as u64;
        [
            (linear % gx) as u32,
            ((linear / gx) % gy) as u32,
            (linear / (gx * gy)) as u32,
        ]
    }

    pub fn linear_block(&self, b: [u32; 3]) -> u64 {
        b[0] as u64 + self.grid[0] as u64 * (b[1] as u64 + self.grid[1] as u64 * b[2] as u64)
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        if self.block.iter().chain(self.grid.iter()).any(|&d| d == 0) {
            return Err(KernelError::InvalidLaunch("all dimensions must be at least 1".into()));
        }
        if self.work_per_thread == 0 {
            return Err(KernelError::InvalidLaunch("workPerThread must be at least 1".into()));
        }
        Ok(())
    }
}

/// Thread folding: each thread computes two consecutive points along an axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub enum Folding {
    #[default]
    #[serde(rename = "none")]
    None,
    #[serde(rename = "2y")]
    Y2,
    #[serde(rename = "2z")]
    Z2,
}

impl Folding {
    pub const ALL: [Folding; 3] = [Folding::None, Folding::Y2, Folding::Z2];

    /// Points computed per thread along x, y, z.
    pub fn factors(self) -> [u32; 3] {
        match self {
            Folding::None => [1, 1, 1],
            Folding::Y2 => [1, 2, 1],
            Folding::Z2 => [1, 1, 2],
        }
    }

    pub fn work_per_thread(self) -> u32 {
        self.factors().iter().product()
    }
}

impl fmt::Display for Folding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Folding::None => "none",
            Folding::Y2 => "2y",
            Folding::Z2 => "2z",
        })
    }
}

impl FromStr for Folding {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Folding::None),
            "2y" => Ok(Folding::Y2),
            "2z" => Ok(Folding::Z2),
            _ => Err(format!("unknown folding `{s}` (expected none, 2y or 2z)")),
        }
    }
}

/// Everything the estimator needs to know about one kernel launch.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelDescriptor {
    pub name: String,
    pub fields: Vec<Field>,
    pub accesses: Vec<Access>,
    pub launch: LaunchConfig,
    pub flops_per_lup: f64,
}

impl KernelDescriptor {
    pub fn validate(&self) -> Result<(), KernelError> {
        let mut names = HashSet::new();
        for f in &self.fields {
            f.validate()?;
            if !names.insert(f.name.as_str()) {
                return Err(KernelError::InvalidField {
                    field: f.name.clone(),
                    reason: "duplicate field name".into(),
                });
            }
        }
        if self.accesses.is_empty() {
            return Err(KernelError::NoAccesses);
        }
        for (index, a) in self.accesses.iter().enumerate() {
            let bad = |reason: String| KernelError::InvalidAccess {
                index,
                field: a.field.clone(),
                reason,
            };
            if !names.contains(a.field.as_str()) {
                return Err(bad("field is not declared".into()));
            }
            if a.multiplicity == 0 {
                return Err(bad("multiplicity must be at least 1".into()));
            }
            let refs = a.expr.base_refs();
            if a.expr.base_ref_count() != 1 || refs != [a.field.as_str()] {
                return Err(bad(format!(
                    "address expression must reference exactly one base, `{}`, found {:?}",
                    a.field, refs
                )));
            }
        }
        self.launch.validate()?;
        if !self.flops_per_lup.is_finite() || self.flops_per_lup < 0.0 {
            return Err(KernelError::InvalidFlops(self.flops_per_lup));
        }
        Ok(())
    }

    pub fn field(&self, name: &str) -> Option<&Field> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    /// Base substitution: each field's base is replaced by its alignment.
    pub fn base_map(&self) -> BaseMap {
        self.fields
            .iter()
            .map(|f| (f.name.clone(), f.alignment))
            .collect()
    }

    pub fn with_launch(&self, launch: LaunchConfig) -> Self {
        KernelDescriptor {
            launch,
            ..self.clone()
        }
    }

    /// Smallest DRAM traffic per lattice update: one element per accessed
    /// (field, kind) pair, as if every grid point's data moved exactly once.
    pub fn minimal_bytes_per_lup(&self) -> f64 {
        let mut seen = HashSet::new();
        let mut bytes = 0u64;
        for a in &self.accesses {
            if seen.insert((a.field.as_str(), a.kind)) {
                bytes += self.field(&a.field).map(|f| f.element_size as u64).unwrap_or(0);
            }
        }
        bytes as f64
    }

    /// Access instances per thread, counting multiplicity.
    pub fn access_instances(&self, kind: Option<AccessKind>) -> u64 {
        self.accesses
            .iter()
            .filter(|a| kind.map_or(true, |k| a.kind == k))
            .map(|a| a.multiplicity as u64)
            .sum()
    }
}

/// Number of blocks needed to cover `extent` points with `per_block` points per block.
pub(crate) fn exact_blocks(axis: char, extent: u64, per_block: u64) -> Result<u32, KernelError> {
    if per_block == 0 || extent == 0 || extent % per_block != 0 {
        return Err(KernelError::NotDivisible {
            axis,
            extent,
            block: per_block,
        });
    }
    u32::try_from(extent / per_block)
        .map_err(|_| KernelError::InvalidLaunch(format!("grid along {axis} exceeds u32")))
}
