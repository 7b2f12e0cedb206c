//! Analytic estimates of the data volumes a GPU kernel moves through the
//! memory hierarchy, and a four-limiter performance model built on them.
//!
//! The pipeline: a [`kernel::KernelDescriptor`] holds address expressions and
//! a launch configuration; [`footprint`] enumerates the unique cache lines
//! touched by thread blocks and waves; [`volume`] turns footprints into
//! per-level volumes; [`perf`] converts volumes into limiter times.

pub mod estimate;
pub mod expr;
pub mod fit;
pub mod footprint;
pub mod kernel;
pub mod machine;
pub mod perf;
pub mod volume;

use thiserror::Error;

pub use estimate::{estimate, Estimate, EstimateOptions};
pub use expr::{AddressExpr, ThreadCoord};
pub use kernel::{AccessKind, Folding, KernelDescriptor, LaunchConfig};
pub use machine::MachineDescriptor;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Kernel(#[from] kernel::KernelError),
    #[error(transparent)]
    Expr(#[from] expr::ExprError),
    #[error(transparent)]
    Machine(#[from] machine::MachineError),
    #[error(transparent)]
    Fit(#[from] fit::FitError),
    #[error("block of {threads} threads exceeds the machine limit of {max}")]
    BlockTooLarge { threads: u64, max: u32 },
    #[error("{0}")]
    Invalid(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for errors caused by unreadable or unwritable files.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Machine(machine::MachineError::Io { .. }) => true,
            Error::Csv(e) => matches!(e.kind(), csv::ErrorKind::Io(_)),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
