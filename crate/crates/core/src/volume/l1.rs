//! L1 to register transfer cycles from bank conflicts.

use serde::Serialize;

use crate::footprint::representative_blocks;
use crate::kernel::{AccessKind, KernelDescriptor};
use crate::machine::MachineDescriptor;
use crate::Result;

pub const WARP_SIZE: usize = 32;
pub const HALF_WARP: usize = 16;

/// How conflicting addresses inside one bank are serialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum BankPolicy {
    /// Cycles per half-warp are the largest number of distinct words in any
    /// bank. When every word of the half-warp lands in one bank, the distinct
    /// words of the full warp in that bank are counted instead.
    #[default]
    WarpSerializedSingleBank,
    /// Strict half-warp counting.
    HalfWarp,
}

/// Cycles needed to serve one half-warp.
pub fn half_warp_cycles(
    half: &[i64],
    warp: &[i64],
    banks: u32,
    bank_width: u32,
    policy: BankPolicy,
) -> u32 {
    let banks = banks as i64;
    let width = bank_width as i64;
    let mut words: Vec<i64> = half.iter().map(|a| a.div_euclid(width)).collect();
    words.sort_unstable();
    words.dedup();
    if words.is_empty() {
        return 0;
    }
    let mut per_bank = vec![0u32; banks as usize];
    for w in &words {
        per_bank[w.rem_euclid(banks) as usize] += 1;
    }
    let max = *per_bank.iter().max().unwrap_or(&0);
    let used = per_bank.iter().filter(|&&c| c > 0).count();
    if policy == BankPolicy::WarpSerializedSingleBank && used == 1 && max > 1 {
        let bank = words[0].rem_euclid(banks);
        let mut all: Vec<i64> = warp
            .iter()
            .map(|a| a.div_euclid(width))
            .filter(|w| w.rem_euclid(banks) == bank)
            .collect();
        all.sort_unstable();
        all.dedup();
        return all.len() as u32;
    }
    max
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AccessCycles {
    pub access: usize,
    pub field: String,
    pub kind: AccessKind,
    /// Mean cycles per half-warp over the sampled block.
    pub cycles_per_half_warp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct L1CycleEstimate {
    /// L1 cycles one warp spends on a single lattice update of each of its threads.
    pub cycles_per_lup_per_warp: f64,
    pub accesses: Vec<AccessCycles>,
}

impl L1CycleEstimate {
    /// Cycles per lattice update, i.e. per warp-LUP divided over the warp's lanes.
    pub fn cycles_per_lup(&self) -> f64 {
        self.cycles_per_lup_per_warp / WARP_SIZE as f64
    }
}

/// Bank-conflict cycles for every access, costed on one representative block.
pub fn l1_register_cycles(kernel: &KernelDescriptor, machine: &MachineDescriptor) -> Result<L1CycleEstimate> {
    let block = representative_blocks(&kernel.launch, 1)[0];
    l1_register_cycles_with(kernel, machine, block, BankPolicy::default())
}

pub fn l1_register_cycles_with(
    kernel: &KernelDescriptor,
    machine: &MachineDescriptor,
    block: u64,
    policy: BankPolicy,
) -> Result<L1CycleEstimate> {
    let launch = &kernel.launch;
    let bases = kernel.base_map();
    let group = crate::footprint::CollaborativeGroup::block(block);
    let threads = group.threads(launch);
    let mut accesses = Vec::with_capacity(kernel.accesses.len());
    let mut per_warp = 0.0;
    for (i, a) in kernel.accesses.iter().enumerate() {
        let addrs = a.expr.bind(launch, &bases)?.eval_many(&threads)?;
        let mut total = 0u64;
        let mut halves = 0u64;
        for warp in addrs.chunks(WARP_SIZE) {
            for half in warp.chunks(HALF_WARP) {
                total += half_warp_cycles(half, warp, machine.l1_banks, machine.bank_width_bytes, policy) as u64;
                halves += 1;
            }
        }
        let mean = total as f64 / halves as f64;
        per_warp += mean * (WARP_SIZE / HALF_WARP) as f64 * a.multiplicity as f64;
        accesses.push(AccessCycles {
            access: i,
            field: a.field.clone(),
            kind: a.kind,
            cycles_per_half_warp: mean,
        });
    }
    Ok(L1CycleEstimate {
        cycles_per_lup_per_warp: per_warp / launch.work_per_thread as f64,
        accesses,
    })
}
