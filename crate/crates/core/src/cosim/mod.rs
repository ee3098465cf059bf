//! Coupled circuit/device simulation by Gauss-Seidel dynamic iteration.

mod control;
mod record;
mod sim;
mod system;

pub use control::{adapt_step, fit_to_target, StepDecision, StepOptions};
pub use record::{CsvError, StepInfo, TransientRecord};
pub use sim::{GsOptions, GsOutcome, OperatingPoint, RunStats, SimError, SimOptions, Simulator};
pub use system::{CoupledSystem, Port};
