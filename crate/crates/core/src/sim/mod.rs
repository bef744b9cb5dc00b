//! Latency cost model: phase-structured runtimes of naive and blocked
//! execution, an independent discrete-event oracle, transfer descriptors and
//! strong-scaling sweeps.

mod cost;
pub mod oracle;
mod phase;
pub mod sweep;
pub mod transfer;

pub use cost::{CostModel, SimError};
pub use phase::{
    parallel_time, simulate_blocked, simulate_naive, BlockedProfile, LevelProfile, NaiveLevel,
    NaiveProfile, NaiveTrace, PhaseRow, PhaseTrace, StepTrace,
};
