//! `gvo`: data volume and performance estimates for GPU stencil kernels.

mod inputs;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gvo::estimate::{rank_sweep, KernelFamily};
use gvo::fit::{calibrate_all, derive_observations, CalibrationInputs, Measurement};
use gvo::footprint::{build_waves_with, grid_iteration, representative_blocks, CollaborativeGroup, KindFilter};
use gvo::kernel::{enumerate_sweep, Folding};
use gvo::volume::{BankPolicy, MeasureOptions};

use inputs::{resolve_machine, KernelSource};
use output::{write_to, Format};

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<gvo::Error> for CliError {
    fn from(e: gvo::Error) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<gvo::kernel::KernelError> for CliError {
    fn from(e: gvo::kernel::KernelError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<gvo::fit::FitError> for CliError {
    fn from(e: gvo::fit::FitError) -> Self {
        CliError::Validation(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "gvo", version, about = "Estimate GPU memory-hierarchy data volumes and rank thread block shapes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Volume breakdown and performance prediction for one launch.
    Estimate(EstimateArgs),
    /// Estimate every block shape of a sweep and rank them.
    Sweep(SweepArgs),
    /// Fit the miss-ratio functions to measured volumes.
    Calibrate(CalibrateArgs),
    /// Unique footprint of one thread block or wave.
    Footprint(FootprintArgs),
    /// Print a machine description.
    Machine(MachineArgs),
}

fn parse_triple<T: std::str::FromStr>(s: &str) -> Result<[T; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected X,Y,Z, got `{s}`"));
    }
    let mut out = Vec::with_capacity(3);
    for p in parts {
        out.push(p.parse::<T>().map_err(|_| format!("`{p}` is not a valid extent"))?);
    }
    out.try_into().map_err(|_| unreachable!())
}

#[derive(Args)]
struct KernelArgs {
    /// `builtin:stencil`, `builtin:lbm`, or a kernel spec file.
    #[arg(long)]
    kernel: String,
    /// Preset name or machine file; files are also searched in $GVO_MACHINE_DIR.
    #[arg(long, default_value = "v100")]
    machine: String,
    /// Iteration space of a built-in kernel, in lattice points.
    #[arg(long, value_parser = parse_triple::<u64>)]
    grid: Option<[u64; 3]>,
    /// Override the kernel's Flop per lattice update.
    #[arg(long)]
    flops: Option<f64>,
}

#[derive(Args)]
struct SampleArgs {
    /// Representative blocks and waves averaged per estimate.
    #[arg(long, default_value_t = 5)]
    samples: usize,
    /// Override the occupancy-derived number of blocks per wave.
    #[arg(long)]
    blocks_per_wave: Option<u64>,
    /// Count bank conflicts per half-warp only.
    #[arg(long)]
    strict_half_warp: bool,
}

impl SampleArgs {
    fn options(&self) -> Result<MeasureOptions, CliError> {
        if self.samples == 0 {
            return Err(CliError::Validation("--samples must be at least 1".into()));
        }
        Ok(MeasureOptions {
            l1_samples: self.samples,
            wave_samples: self.samples,
            blocks_per_wave: self.blocks_per_wave,
            bank_policy: if self.strict_half_warp {
                BankPolicy::HalfWarp
            } else {
                BankPolicy::WarpSerializedSingleBank
            },
        })
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    kernel: KernelArgs,
    /// Thread block shape; kernel files keep their own launch when omitted.
    #[arg(long, value_parser = parse_triple::<u32>)]
    block: Option<[u32; 3]>,
    #[arg(long, default_value = "none")]
    folding: Folding,
    #[command(flatten)]
    samples: SampleArgs,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    kernel: KernelArgs,
    /// Threads per block (defaults to 1024 for the stencil, 512 otherwise).
    #[arg(long)]
    threads: Option<u32>,
    /// Treat --threads as an upper bound instead of an exact product.
    #[arg(long)]
    max_threads: bool,
    /// Add the 2y and 2z thread folding variants (stencil only).
    #[arg(long)]
    folding_variants: bool,
    #[command(flatten)]
    samples: SampleArgs,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Write the ranking here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write per-level volume rows for every configuration.
    #[arg(long)]
    volumes: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// CSV with columns configKey, level, kind, measuredBytesPerLup.
    #[arg(long)]
    measurements: PathBuf,
    /// Ranking CSV written by `gvo sweep` for the same configurations.
    #[arg(long)]
    sweep_output: PathBuf,
    /// Machine whose fit parameters seed the calibration.
    #[arg(long, default_value = "v100")]
    machine: String,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write the machine description with the fitted parameters.
    #[arg(long)]
    machine_out: Option<PathBuf>,
    /// Write derived and fitted miss ratios as CSV.
    #[arg(long)]
    observations: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum GroupKind {
    Block,
    Wave,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Filter {
    Loads,
    Stores,
    All,
}

#[derive(Args)]
struct FootprintArgs {
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, value_parser = parse_triple::<u32>)]
    block: Option<[u32; 3]>,
    #[arg(long, default_value = "none")]
    folding: Folding,
    #[arg(long, value_enum, default_value = "block")]
    group: GroupKind,
    /// Linear block or wave index; defaults to a representative interior one.
    #[arg(long)]
    index: Option<u64>,
    /// Line size in bytes.
    #[arg(long, default_value_t = 32)]
    granularity: u64,
    #[arg(long, value_enum, default_value = "all")]
    filter: Filter,
    /// Override the occupancy-derived number of blocks per wave.
    #[arg(long)]
    blocks_per_wave: Option<u64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct MachineArgs {
    #[arg(long, default_value = "v100")]
    machine: String,
}

fn source(k: &KernelArgs) -> Result<KernelSource, CliError> {
    KernelSource::parse(&k.kernel)
}

fn cmd_estimate(a: &EstimateArgs) -> Result<(), CliError> {
    let machine = resolve_machine(&a.kernel.machine)?;
    let kernel = source(&a.kernel)?.kernel(a.block, a.folding, a.kernel.grid, a.kernel.flops)?;
    let est = gvo::estimate(&kernel, &machine, &a.samples.options()?)?;
    write_to(None, &output::estimate(&est, a.format)?)
}

fn cmd_sweep(a: &SweepArgs) -> Result<(), CliError> {
    let machine = resolve_machine(&a.kernel.machine)?;
    let src = source(&a.kernel)?;
    let family = src.family(a.kernel.grid, a.kernel.flops)?;
    let mut constraints = family.sweep_constraints();
    constraints.exact = !a.max_threads;
    if !a.folding_variants {
        constraints.foldings = vec![Folding::None];
    } else if !matches!(family, KernelFamily::Stencil(_)) {
        return Err(CliError::Validation("--folding-variants needs the built-in stencil".into()));
    }
    let threads = a.threads.unwrap_or_else(|| family.sweep_threads());
    let configs = enumerate_sweep(threads, &constraints)?;
    let rows = rank_sweep(&family, &configs, &machine, &a.samples.options()?)?;
    if let Some(path) = &a.volumes {
        write_to(Some(path), &output::sweep_volumes(&rows)?)?;
    }
    write_to(a.output.as_deref(), &output::ranking(&rows, a.format)?)
}

fn read_csv_file<T>(path: &PathBuf, read: impl Fn(std::fs::File) -> Result<T, gvo::fit::FitError>) -> Result<T, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    read(file).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn cmd_calibrate(a: &CalibrateArgs) -> Result<(), CliError> {
    let machine = resolve_machine(&a.machine)?;
    let measurements = read_csv_file(&a.measurements, Measurement::read_csv)?;
    let inputs = read_csv_file(&a.sweep_output, CalibrationInputs::read_csv)?;
    let report = calibrate_all(&measurements, &inputs, &machine.fit_params)?;
    if let Some(path) = &a.observations {
        let obs = derive_observations(&measurements, &inputs, &report.fits)?;
        write_to(Some(path), &output::observations(&obs, &report)?)?;
    }
    if let Some(path) = &a.machine_out {
        let mut text = machine.with_fits(report.fits).to_json();
        text.push('\n');
        write_to(Some(path), &text)?;
    }
    write_to(a.output.as_deref(), &output::calibration(&report, a.format)?)
}

fn cmd_footprint(a: &FootprintArgs) -> Result<(), CliError> {
    let machine = resolve_machine(&a.kernel.machine)?;
    let kernel = source(&a.kernel)?.kernel(a.block, a.folding, a.kernel.grid, a.kernel.flops)?;
    let launch = &kernel.launch;
    let group = match a.group {
        GroupKind::Block => {
            let b = a.index.unwrap_or_else(|| representative_blocks(launch, 1)[0]);
            CollaborativeGroup::block(b)
        }
        GroupKind::Wave => {
            let per_wave = match a.blocks_per_wave {
                Some(n) => n,
                None => gvo::footprint::blocks_per_wave(launch, &machine)?,
            };
            let waves = build_waves_with(launch, per_wave)?;
            let i = a.index.map_or(waves.len() / 2, |i| i as usize);
            let wave = waves
                .get(i)
                .ok_or_else(|| CliError::Validation(format!("wave {i} out of range ({} waves)", waves.len())))?;
            CollaborativeGroup::wave(wave)
        }
    };
    let filter = match a.filter {
        Filter::Loads => KindFilter::Loads,
        Filter::Stores => KindFilter::Stores,
        Filter::All => KindFilter::All,
    };
    let result = grid_iteration(&kernel, &group, a.granularity, filter)?;
    write_to(None, &output::footprint(&result, a.format)?)
}

fn cmd_machine(a: &MachineArgs) -> Result<(), CliError> {
    let mut text = resolve_machine(&a.machine)?.to_json();
    text.push('\n');
    write_to(None, &text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Footprint(a) => cmd_footprint(a),
        Command::Machine(a) => cmd_machine(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gvo: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
