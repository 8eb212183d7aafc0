//! Task graph with dependencies and conflicts, hierarchical cell locks, the
//! scheduling state machine and the task cost model. Threads live in the
//! companion crate; everything here is single-threaded bookkeeping.

pub mod build;
pub mod cost;
pub mod graph;
pub mod locks;
pub mod sched;

pub use build::{build_graph, merge_ranks, StepInput};
pub use cost::CostModel;
pub use graph::{Task, TaskGraph, TaskKind};
pub use locks::LockTable;
pub use sched::{Claim, Scheduler};
