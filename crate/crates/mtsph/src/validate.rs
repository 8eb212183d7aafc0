//! Shock-tube validation against the exact Riemann solution.

use mtsph_core::sph::Particle;
use mtsph_core::time::Scheme;

use crate::riemann::Riemann;
use crate::scenario::sod_tube;
use crate::sim::{Sim, SimConfig};
use crate::{Error, Result};

/// Interface position of the tube the error is measured around.
pub const SOD_INTERFACE: f64 = 1.0;
/// Half-width of the measurement window around the interface.
pub const SOD_HALF_WINDOW: f64 = 0.5;
pub const SOD_L1_LIMIT: f64 = 0.05;
pub const ENERGY_DRIFT_LIMIT: f64 = 0.01;

/// Volume-weighted mean |rho - rho_exact| over particles in the window,
/// with particle volume m / rho.
pub fn density_l1(particles: &[Particle], exact: &Riemann, x0: f64, half_window: f64, t: f64) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for p in particles {
        let x = p.pos[0];
        if (x - x0).abs() < half_window && p.rho > 0.0 {
            let v = p.mass / p.rho;
            num += v * (p.rho - exact.density(x, x0, t)).abs();
            den += v;
        }
    }
    (den > 0.0).then(|| num / den)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SodReport {
    pub steps: usize,
    pub t: f64,
    pub l1: f64,
    /// Relative change of total energy between start and end.
    pub energy_drift: f64,
    pub particles: Vec<Particle>,
}

impl SodReport {
    pub fn passed(&self) -> bool {
        self.l1 < SOD_L1_LIMIT && self.energy_drift.abs() < ENERGY_DRIFT_LIMIT
    }

    pub fn check(&self) -> Result<()> {
        if self.passed() {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "sod tube: L1 density error {:.4} (limit {SOD_L1_LIMIT}), energy drift {:.2e} (limit {ENERGY_DRIFT_LIMIT})",
                self.l1, self.energy_drift
            )))
        }
    }
}

/// Run the shock tube to its end time under the global scheme.
pub fn run_sod(workers: usize) -> Result<SodReport> {
    let ics = sod_tube();
    let cfg = SimConfig { scheme: Scheme::Global, workers, ..ics.sim_config() };
    let t = cfg.t_end;
    let mut sim = Sim::new(cfg, ics.particles, ics.boxsize)?;
    let e0 = sim.total_energy();
    let steps = sim.run_to_end(|_| {})?.len();
    let e1 = sim.total_energy();
    let particles = sim.particles();
    let l1 = density_l1(&particles, &Riemann::sod(), SOD_INTERFACE, SOD_HALF_WINDOW, t)
        .ok_or_else(|| Error::Validation("no particles in the measurement window".into()))?;
    Ok(SodReport { steps, t, l1, energy_drift: (e1 - e0) / e0, particles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use mtsph_core::Vec3;

    #[test]
    fn exact_profile_has_zero_error() {
        let r = Riemann::sod();
        let ps: Vec<Particle> = (0..200)
            .map(|i| {
                let x = 0.5 + i as f64 / 200.0;
                let mut p = Particle::new(i, Vec3::new(x, 0.0, 0.0), Vec3::ZERO, 1e-3, 0.01, 1.0);
                p.rho = r.density(x, 1.0, 0.2);
                p
            })
            .collect();
        assert!(density_l1(&ps, &r, 1.0, 0.5, 0.2).unwrap() < 1e-15);
        assert_eq!(density_l1(&[], &r, 1.0, 0.5, 0.2), None);
    }

    #[test]
    fn uniform_offset_gives_that_offset() {
        let r = Riemann::sod();
        let ps: Vec<Particle> = (0..50)
            .map(|i| {
                let x = 0.55 + i as f64 / 100.0;
                let mut p = Particle::new(i, Vec3::new(x, 0.0, 0.0), Vec3::ZERO, 1e-3, 0.01, 1.0);
                p.rho = r.density(x, 1.0, 0.0) + 0.1;
                p
            })
            .collect();
        let l1 = density_l1(&ps, &r, 1.0, 0.5, 0.0).unwrap();
        assert!((l1 - 0.1).abs() < 1e-12, "{l1}");
    }
}
