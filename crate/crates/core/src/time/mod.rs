//! Integer-tick time-bin hierarchy and the kick-drift-kick integrator.

pub mod grid;
pub mod integrate;

pub use grid::{aligned_bin, max_active_bin, StepClock, TimeGrid};
pub use integrate::{drift_particle, kick, wrap_particle, DriftOutcome};

/// How particles are advanced each step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Every particle is kicked and drifted with the global minimum step.
    Global,
    /// Every particle is drifted each step; only active particles are kicked.
    DriftAll,
    /// Only particles in cells reachable from active cells are drifted.
    DriftActive,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Global, Scheme::DriftAll, Scheme::DriftActive];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Global => "global",
            Scheme::DriftAll => "drift-all",
            Scheme::DriftActive => "drift-active",
        }
    }

    pub fn parse(s: &str) -> Option<Scheme> {
        Scheme::ALL.into_iter().find(|x| x.name() == s)
    }
}
