//! Density-energy SPH forces with Monaghan artificial viscosity, and the CFL
//! time-step.

use crate::sph::kernel::grad_w_unchecked;
use crate::sph::particle::SphConfig;
use crate::vec3::Vec3;

/// What the force loop needs to know about one particle.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ForceInput {
    pub pos: Vec3,
    pub vel: Vec3,
    pub mass: f64,
    pub h: f64,
    pub rho: f64,
    pub pressure: f64,
    pub c: f64,
}

/// Contribution of one pair to both members.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairForce {
    pub acc_i: Vec3,
    pub acc_j: Vec3,
    pub du_i: f64,
    pub du_j: f64,
    pub v_sig: f64,
}

/// Interaction of `i` and `j` separated by `dx = x_i - x_j` (periodic image
/// already applied). Returns `None` for pairs outside both supports or at zero
/// separation.
#[inline]
pub fn pair_force(i: &ForceInput, j: &ForceInput, dx: Vec3, cfg: &SphConfig) -> Option<PairForce> {
    let r2 = dx.norm2();
    let hmax = i.h.max(j.h);
    if r2 == 0.0 || r2 >= 4.0 * hmax * hmax {
        return None;
    }
    let r = libm::sqrt(r2);
    let gbar = 0.5 * (grad_w_unchecked(r, i.h) + grad_w_unchecked(r, j.h));
    let dv = i.vel - j.vel;
    let vdotr = dv.dot(dx);

    let mut visc = 0.0;
    if vdotr < 0.0 {
        let hbar = 0.5 * (i.h + j.h);
        let mu = hbar * vdotr / (r2 + 0.01 * hbar * hbar);
        let cbar = 0.5 * (i.c + j.c);
        let rhobar = 0.5 * (i.rho + j.rho);
        visc = (-cfg.visc_alpha * cbar * mu + cfg.visc_beta * mu * mu) / rhobar;
    }
    let pi = i.pressure / (i.rho * i.rho);
    let pj = j.pressure / (j.rho * j.rho);
    let g = gbar / r;
    let common = (pi + pj + visc) * g;
    let dir = dx * common;
    let w = vdotr * g;
    Some(PairForce {
        acc_i: dir * (-j.mass),
        acc_j: dir * i.mass,
        du_i: j.mass * (pi + 0.5 * visc) * w,
        du_j: i.mass * (pj + 0.5 * visc) * w,
        v_sig: i.c + j.c + (-3.0 * vdotr / r).max(0.0),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ForceResult {
    pub accel: Vec3,
    pub du_dt: f64,
    pub v_sig_max: f64,
    /// Neighbours skipped for sitting at zero separation.
    pub n_coincident: u32,
}

/// Force on `target` from `neighbours`, each given with its displacement
/// `x_j - x_i`. The target's own entry, if present, must have zero
/// displacement and the same mass and velocity; it is ignored.
pub fn compute_force<'a, I>(target: &ForceInput, neighbours: I, cfg: &SphConfig) -> ForceResult
where
    I: IntoIterator<Item = (&'a ForceInput, Vec3)>,
{
    let mut out = ForceResult { v_sig_max: 2.0 * target.c, ..Default::default() };
    for (j, d) in neighbours {
        if d.norm2() == 0.0 {
            if core::ptr::eq(j, target) {
                continue;
            }
            out.n_coincident += 1;
            continue;
        }
        if let Some(f) = pair_force(target, j, -d, cfg) {
            out.accel += f.acc_i;
            out.du_dt += f.du_i;
            out.v_sig_max = out.v_sig_max.max(f.v_sig);
        }
    }
    out
}

/// Delta t = C h / v_sig; a zero signal speed yields +infinity.
#[inline]
pub fn cfl_timestep(h: f64, v_sig_max: f64, cfl: f64) -> f64 {
    if v_sig_max > 0.0 {
        cfl * h / v_sig_max
    } else {
        f64::INFINITY
    }
}
