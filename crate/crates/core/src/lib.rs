pub mod cli;
pub mod design;
pub mod diagnostics;
pub mod emulator;
pub mod error;
pub mod kernel;
pub mod matcher;
pub mod prior;
pub mod seed;
pub mod simulator;

mod linalg;
mod optim;

pub use design::{CandidateSet, DesignSpace, InputPoint, VariableKind, VariableSpec};
pub use error::{Error, FitError, JobError, Result, SimulatorError};
pub use kernel::{kernel_eval, KernelParams};
pub use linalg::Jitter;
pub use prior::{HyperPriors, Prior};
