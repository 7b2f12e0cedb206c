//! Resolving `--kernel` and `--machine` arguments.

use std::path::{Path, PathBuf};

use gvo::estimate::KernelFamily;
use gvo::kernel::{Folding, LbmParams, StencilParams, SweepConfig};
use gvo::machine::load_machine;
use gvo::{KernelDescriptor, MachineDescriptor};

use crate::CliError;

pub const MACHINE_DIR_VAR: &str = "GVO_MACHINE_DIR";

pub const STENCIL_GRID: [u64; 3] = [512, 512, 512];
pub const STENCIL_PITCH: u64 = 640;
pub const LBM_GRID: [u64; 3] = [256, 128, 128];

/// A kernel argument: one of the built-in generators or a spec file.
pub enum KernelSource {
    Stencil,
    Lbm,
    File(PathBuf),
}

impl KernelSource {
    pub fn parse(arg: &str) -> Result<Self, CliError> {
        match arg.strip_prefix("builtin:") {
            Some("stencil") => Ok(KernelSource::Stencil),
            Some("lbm") => Ok(KernelSource::Lbm),
            Some(other) => Err(CliError::Validation(format!(
                "unknown built-in kernel `{other}` (expected builtin:stencil or builtin:lbm)"
            ))),
            None => Ok(KernelSource::File(arg.into())),
        }
    }

    pub fn family(&self, grid: Option<[u64; 3]>, flops: Option<f64>) -> Result<KernelFamily, CliError> {
        let family = match self {
            KernelSource::Stencil => {
                let mut p = StencilParams::range4(grid.unwrap_or(STENCIL_GRID), [1, 1, 1], Folding::None);
                if grid.is_none() {
                    p.leading_dim = Some(STENCIL_PITCH);
                }
                KernelFamily::Stencil(p)
            }
            KernelSource::Lbm => {
                let mut p = LbmParams::new(grid.unwrap_or(LBM_GRID), [1, 1, 1]);
                if let Some(f) = flops {
                    p.flops_per_lup = f;
                }
                KernelFamily::Lbm(p)
            }
            KernelSource::File(path) => {
                if grid.is_some() {
                    return Err(CliError::Validation(
                        "--grid only applies to built-in kernels; kernel files carry their own launch".into(),
                    ));
                }
                let mut k = read_kernel(path)?;
                if let Some(f) = flops {
                    k.flops_per_lup = f;
                }
                KernelFamily::Custom(k)
            }
        };
        Ok(family)
    }

    /// The descriptor to estimate. Kernel files keep their launch unless a
    /// block is given.
    pub fn kernel(
        &self,
        block: Option<[u32; 3]>,
        folding: Folding,
        grid: Option<[u64; 3]>,
        flops: Option<f64>,
    ) -> Result<KernelDescriptor, CliError> {
        let family = self.family(grid, flops)?;
        match (&family, block) {
            (KernelFamily::Custom(k), None) => {
                if folding != Folding::None {
                    return Err(CliError::Validation("--folding needs a built-in stencil".into()));
                }
                Ok(k.clone())
            }
            (_, None) => Err(CliError::Validation("--block is required for built-in kernels".into())),
            (_, Some(b)) => Ok(family.instantiate(&SweepConfig::new(b, folding))?),
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn read_kernel(path: &Path) -> Result<KernelDescriptor, CliError> {
    let text = read_text(path)?;
    KernelDescriptor::from_spec_json(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Looks `name` up as a file path, then inside `$GVO_MACHINE_DIR` (with or
/// without a `.json` suffix), then among the presets.
pub fn resolve_machine(name: &str) -> Result<MachineDescriptor, CliError> {
    let mut candidates = vec![PathBuf::from(name)];
    if let Some(dir) = std::env::var_os(MACHINE_DIR_VAR) {
        let dir = PathBuf::from(dir);
        candidates.push(dir.join(name));
        candidates.push(dir.join(format!("{name}.json")));
    }
    if let Some(path) = candidates.iter().find(|p| p.is_file()) {
        return load_machine(path).map_err(|e| match e {
            gvo::machine::MachineError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Validation(format!("{}: {other}", path.display())),
        });
    }
    MachineDescriptor::preset(name).ok_or_else(|| {
        CliError::Io(format!(
            "machine `{name}` is neither a preset nor a readable file (searched ./ and ${MACHINE_DIR_VAR})"
        ))
    })
}
