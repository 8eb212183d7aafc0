//! Allocation-only core of a multi-time-stepping SPH engine.
//!
//! Everything in this crate is pure computation over caller-owned data:
//! SPH numerics, the integer-tick time-bin hierarchy, the adaptive cell tree
//! with its pair enumeration, the task graph and its conflict-aware
//! scheduling state machine, graph-based domain decomposition, and the
//! message model used by simulated ranks. Threads, clocks and files live in
//! the `mtsph` companion crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod comm;
pub mod decomp;
pub mod error;
pub mod fixed;
pub mod hydro;
pub mod sph;
pub mod task;
pub mod time;
pub mod tree;
pub mod vec3;

pub use error::{Error, Result};
pub use vec3::Vec3;
