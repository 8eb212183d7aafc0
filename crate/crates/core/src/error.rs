use alloc::string::String;
use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("kernel domain error: {0}")]
    Domain(&'static str),

    #[error("smoothing length did not converge after {iterations} iterations (best h = {best_h})")]
    NoConvergence { iterations: u32, best_h: f64 },

    #[error("time-step {dt:e} is below the tick duration {t_min:e}; increase the number of time bins")]
    StepTooSmall { dt: f64, t_min: f64 },

    #[error("drift would reverse time: particle {id} at tick {from} asked to drift to {to}")]
    TimeReversal { id: u64, from: u64, to: u64 },

    #[error("particle {id} at {pos:?} lies outside the periodic box")]
    OutsideBox { id: u64, pos: [f64; 3] },

    #[error("sort cache of cell {cell} along direction {dir} is stale (sorted at tick {sorted}, needed {needed})")]
    StaleSort { cell: usize, dir: usize, sorted: u64, needed: u64 },

    #[error("dependency cycle through tasks {0:?}")]
    Cycle(alloc::vec::Vec<u32>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("partition error: {0}")]
    Partition(String),

    #[error("communication plan inconsistent: {0}")]
    Comm(String),

    #[error("wire format error: {0}")]
    Wire(String),

    #[error("cell {0} has no owning rank")]
    Orphan(usize),
}
