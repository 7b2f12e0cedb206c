//! Thread block shape sweeps.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Folding, KernelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThreadCount {
    /// `X * Y * Z` equals the given count.
    Exact(u32),
    /// `X * Y * Z` is at most the given count.
    AtMost(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepConstraints {
    pub max_xy: u32,
    pub max_z: u32,
    pub exact: bool,
    pub foldings: Vec<Folding>,
}

impl SweepConstraints {
    /// X, Y up to 512, Z up to 64, all three folding variants.
    pub fn stencil() -> Self {
        SweepConstraints {
            max_xy: 512,
            max_z: 64,
            exact: true,
            foldings: Folding::ALL.to_vec(),
        }
    }

    /// Same shape limits without folding variants.
    pub fn lbm() -> Self {
        SweepConstraints {
            foldings: vec![Folding::None],
            ..SweepConstraints::stencil()
        }
    }
}

/// One point of a sweep: block shape plus folding variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SweepConfig {
    pub block: [u32; 3],
    pub folding: Folding,
}

impl SweepConfig {
    pub fn new(block: [u32; 3], folding: Folding) -> Self {
        SweepConfig { block, folding }
    }

    /// Stable textual key, e.g. `16x2x32_none`.
    pub fn key(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for SweepConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [x, y, z] = self.block;
        write!(f, "{x}x{y}x{z}_{}", self.folding)
    }
}

impl FromStr for SweepConfig {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (shape, folding) = s.split_once('_').ok_or_else(|| format!("bad config key `{s}`"))?;
        let dims: Vec<u32> = shape
            .split('x')
            .map(|d| d.parse::<u32>().map_err(|_| format!("bad config key `{s}`")))
            .collect::<Result<_, _>>()?;
        let block: [u32; 3] = dims.try_into().map_err(|_| format!("bad config key `{s}`"))?;
        Ok(SweepConfig::new(block, folding.parse()?))
    }
}

fn powers_of_two_up_to(max: u32) -> impl Iterator<Item = u32> {
    (0..32).map(|e| 1u32 << e).take_while(move |&v| v <= max)
}

/// All power-of-two block shapes meeting `constraints`, crossed with the
/// folding variants, sorted by shape then folding.
pub fn enumerate_sweep(
    total_threads: u32,
    constraints: &SweepConstraints,
) -> Result<Vec<SweepConfig>, KernelError> {
    if !total_threads.is_power_of_two() {
        return Err(KernelError::InvalidLaunch(format!(
            "sweep thread count {total_threads} is not a power of two"
        )));
    }
    let count = if constraints.exact {
        ThreadCount::Exact(total_threads)
    } else {
        ThreadCount::AtMost(total_threads)
    };
    let mut out = Vec::new();
    for x in powers_of_two_up_to(constraints.max_xy) {
        for y in powers_of_two_up_to(constraints.max_xy) {
            for z in powers_of_two_up_to(constraints.max_z) {
                let n = x as u64 * y as u64 * z as u64;
                let keep = match count {
                    ThreadCount::Exact(t) => n == t as u64,
                    ThreadCount::AtMost(t) => n <= t as u64,
                };
                if keep {
                    for &f in &constraints.foldings {
                        out.push(SweepConfig::new([x, y, z], f));
                    }
                }
            }
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}
