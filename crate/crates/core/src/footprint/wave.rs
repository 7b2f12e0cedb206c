//! Waves of concurrently running thread blocks.

use std::ops::Range;

use serde::Serialize;

use super::{field_lines, CollaborativeGroup, KindFilter};
use crate::kernel::{KernelDescriptor, LaunchConfig};
use crate::machine::MachineDescriptor;
use crate::{Error, Result};

/// Consecutive blocks (X-fastest linear order) scheduled together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Wave {
    pub index: usize,
    pub blocks: Range<u64>,
}

impl Wave {
    pub fn len(&self) -> u64 {
        self.blocks.end - self.blocks.start
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// Resident blocks per SM: `min(maxBlocksPerSM, maxThreadsPerSM / blockSize)`.
pub fn blocks_per_sm(launch: &LaunchConfig, machine: &MachineDescriptor) -> Result<u64> {
    let threads = launch.threads_per_block();
    if threads > machine.max_threads_per_block as u64 {
        return Err(Error::BlockTooLarge {
            threads,
            max: machine.max_threads_per_block,
        });
    }
    Ok((machine.max_blocks_per_sm as u64).min(machine.max_threads_per_sm as u64 / threads))
}

pub fn blocks_per_wave(launch: &LaunchConfig, machine: &MachineDescriptor) -> Result<u64> {
    Ok(machine.sm_count as u64 * blocks_per_sm(launch, machine)?)
}

pub fn build_waves(launch: &LaunchConfig, machine: &MachineDescriptor) -> Result<Vec<Wave>> {
    build_waves_with(launch, blocks_per_wave(launch, machine)?)
}

/// Partitions the block grid into runs of `per_wave` blocks; the last wave
/// may be partial.
pub fn build_waves_with(launch: &LaunchConfig, per_wave: u64) -> Result<Vec<Wave>> {
    if per_wave == 0 {
        return Err(Error::Invalid("blocks per wave must be at least 1".into()));
    }
    let n = launch.block_count();
    Ok((0..n.div_ceil(per_wave))
        .map(|i| Wave {
            index: i as usize,
            blocks: i * per_wave..((i + 1) * per_wave).min(n),
        })
        .collect())
}

/// Bytes of load lines shared by `curr` and `prev`, summed over fields.
/// The first wave has no predecessor and no overlap.
pub fn wave_overlap(kernel: &KernelDescriptor, curr: &Wave, prev: &Wave, granularity: u64) -> Result<u64> {
    if curr.index == 0 {
        return Ok(0);
    }
    let a = field_lines(kernel, &CollaborativeGroup::wave(curr), granularity, KindFilter::Loads)?;
    let b = field_lines(kernel, &CollaborativeGroup::wave(prev), granularity, KindFilter::Loads)?;
    let mut shared = 0;
    for fa in &a {
        if let Some(fb) = b.iter().find(|fb| fb.field == fa.field) {
            shared += fa.lines.intersection_len(&fb.lines);
        }
    }
    Ok(shared * granularity)
}

// Indices at the midpoints of `count` equal slices of 0..n.
fn spread(n: u64, count: usize) -> Vec<u64> {
    let count = (count as u64).clamp(1, n.max(1));
    let mut out: Vec<u64> = (0..count).map(|i| (2 * i + 1) * n / (2 * count)).collect();
    out.dedup();
    out
}

/// Up to `count` blocks spread over the grid interior (blocks not on a grid
/// face along axes with at least three blocks). Deterministic.
pub fn representative_blocks(launch: &LaunchConfig, count: usize) -> Vec<u64> {
    let mut lo = [0u32; 3];
    let mut ext = [0u32; 3];
    for i in 0..3 {
        let g = launch.grid[i];
        if g >= 3 {
            lo[i] = 1;
            ext[i] = g - 2;
        } else {
            ext[i] = g;
        }
    }
    let n = ext.iter().map(|&e| e as u64).product::<u64>();
    spread(n, count)
        .into_iter()
        .map(|k| {
            let x = (k % ext[0] as u64) as u32;
            let y = ((k / ext[0] as u64) % ext[1] as u64) as u32;
            let z = (k / (ext[0] as u64 * ext[1] as u64)) as u32;
            launch.linear_block([lo[0] + x, lo[1] + y, lo[2] + z])
        })
        .collect()
}

/// Indices of up to `count` waves that have a predecessor. Wave 0 is only
/// returned for single-wave grids; a trailing partial wave is avoided when
/// there are other candidates.
pub fn representative_waves(waves: &[Wave], count: usize) -> Vec<usize> {
    match waves.len() {
        0 => Vec::new(),
        1 => vec![0],
        n => {
            let full = waves[0].len();
            let mut last = n;
            if n > 2 && waves[n - 1].len() < full {
                last -= 1;
            }
            spread((last - 1) as u64, count)
                .into_iter()
                .map(|k| 1 + k as usize)
                .collect()
        }
    }
}
