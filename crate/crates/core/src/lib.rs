//! Synchronization analysis and communication-avoiding transformation of
//! distributed task graphs, with a latency cost model for naive and blocked
//! execution.
//!
//! The crate is `no_std` and only needs `alloc`; file formats and the command
//! line live in the companion `ca` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod avoid;
pub mod cover;
pub mod generators;
pub mod graph;
pub mod sim;

pub use avoid::{
    blocked_transform, communicated_volume, expand_plan, redundancy, split, verify_well_formed,
    AvoidSplit, MacroStep, MacroStepPlan, ProcSplit, RedundancyReport, SplitError,
};
pub use cover::{
    bases_of_cover, check_overlap_condition, granularity, independent_executability,
    validate_cover, CoverError, CoverReport, LevelCover,
};
pub use generators::{per_level_cover, random_dag, stencil_1d, Boundary, StencilShape};
pub use graph::{GraphError, NodeId, Task, TaskGraph, TaskId, TaskSet};
pub use sim::{
    parallel_time, simulate_blocked, simulate_naive, CostModel, NaiveTrace, PhaseTrace, SimError,
};
