use crate::sph::particle::{flags, Particle};
use crate::time::grid::TimeGrid;
use crate::vec3::Vec3;
use crate::{Error, Result};

/// Half kick: v += a dt_half, u += du/dt dt_half (u floored at zero). Marks
/// the current position as the drift anchor. Returns true if u was floored.
pub fn kick(p: &mut Particle, dt_half: f64, tick: u64) -> bool {
    p.vel += p.accel * dt_half;
    p.u += p.du_dt * dt_half;
    p.tick_last_kick = tick;
    p.anchor = p.pos;
    if p.u < 0.0 {
        p.u = 0.0;
        p.flags |= flags::U_FLOORED;
        true
    } else {
        p.flags &= !flags::U_FLOORED;
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DriftOutcome {
    Moved,
    Unchanged,
}

/// Move `p` to `to_tick`. Positions are evaluated from the anchor at the last
/// kick, so the result depends only on the end tick and not on how the
/// interval was split. Velocity and energy are extrapolated for the force
/// loop from the half-step values held between kicks.
///
/// Positions are not folded back into the periodic box here, so a particle
/// stays next to the tree cell it was sorted into; see [`wrap_particle`].
pub fn drift_particle(p: &mut Particle, to_tick: u64, grid: &TimeGrid) -> Result<DriftOutcome> {
    if to_tick < p.tick_last_drift {
        return Err(Error::TimeReversal { id: p.id, from: p.tick_last_drift, to: to_tick });
    }
    if to_tick == p.tick_last_drift {
        return Ok(DriftOutcome::Unchanged);
    }
    let dt = (to_tick - p.tick_last_kick) as f64 * grid.tick_duration();
    p.pos = p.anchor + p.vel * dt;
    let dt_pred = dt - 0.5 * grid.bin_dt(p.bin);
    p.v_pred = p.vel + p.accel * dt_pred;
    p.u_pred = (p.u + p.du_dt * dt_pred).max(0.0);
    p.tick_last_drift = to_tick;
    Ok(DriftOutcome::Moved)
}

/// Fold the position back into the box, moving the anchor and the rebuild
/// reference by the same whole-box offset.
pub fn wrap_particle(p: &mut Particle, boxsize: Vec3) {
    let w = p.pos.wrap(boxsize);
    let off = w - p.pos;
    if off != Vec3::ZERO {
        p.pos = w;
        p.anchor += off;
        p.pos_rebuild += off;
    }
}
