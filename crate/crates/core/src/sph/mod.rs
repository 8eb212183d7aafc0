//! SPH numerics: kernel, equation of state, density, smoothing-length solve,
//! pairwise forces and the CFL time-step.

pub mod density;
pub mod eos;
pub mod force;
pub mod kernel;
pub mod particle;
pub mod smoothing;

pub use density::compute_density;
pub use eos::{pressure, sound_speed};
pub use force::{cfl_timestep, compute_force, pair_force, ForceInput, ForceResult, PairForce};
pub use kernel::{kernel_grad_w, kernel_w};
pub use particle::{flags, Particle, SphConfig};
pub use smoothing::{ghost_update_h, HOutcome, HSolution, NeighbourList, NeighbourSum};
