use crate::vec3::Vec3;

/// Per-particle status bits.
pub mod flags {
    /// Smoothing length hit the global ceiling.
    pub const H_CAPPED: u32 = 1;
    /// Smoothing length hit the per-step growth limit of the neighbour search.
    pub const REACH_LIMITED: u32 = 2;
    /// Internal energy was floored at zero by the last kick.
    pub const U_FLOORED: u32 = 4;
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Particle {
    pub id: u64,
    pub pos: Vec3,
    pub vel: Vec3,
    pub mass: f64,
    pub h: f64,
    pub u: f64,
    pub rho: f64,
    pub du_dt: f64,
    pub accel: Vec3,
    pub c: f64,
    pub pressure: f64,
    pub bin: u8,
    pub tick_last_drift: u64,
    pub tick_last_kick: u64,
    /// Position at the last kick; drifts are evaluated from here so that any
    /// split of a drift interval lands on the same bits.
    pub anchor: Vec3,
    /// Velocity and energy extrapolated to the last drift tick.
    pub v_pred: Vec3,
    pub u_pred: f64,
    /// Position when the tree was last built.
    pub pos_rebuild: Vec3,
    /// Upper bound on |pos - pos_rebuild| until the next kick.
    pub dx_bound: f64,
    pub flags: u32,
}

impl Particle {
    pub fn new(id: u64, pos: Vec3, vel: Vec3, mass: f64, h: f64, u: f64) -> Self {
        Particle {
            id,
            pos,
            vel,
            mass,
            h,
            u,
            anchor: pos,
            v_pred: vel,
            u_pred: u,
            pos_rebuild: pos,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SphConfig {
    pub cfl_constant: f64,
    pub gamma_eos: f64,
    pub visc_alpha: f64,
    pub visc_beta: f64,
    pub n_ngb_target: f64,
    pub h_max: f64,
    pub h_tolerance: f64,
    /// Largest factor by which h may grow within one step; sets the neighbour
    /// search radius of the density pass.
    pub h_growth: f64,
}

impl Default for SphConfig {
    fn default() -> Self {
        SphConfig {
            cfl_constant: 0.2,
            gamma_eos: 5.0 / 3.0,
            visc_alpha: 1.0,
            visc_beta: 2.0,
            n_ngb_target: 48.0,
            h_max: f64::INFINITY,
            h_tolerance: 1e-4,
            h_growth: 1.2,
        }
    }
}

impl SphConfig {
    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error::Config;
        use alloc::format;
        if !(self.cfl_constant > 0.0 && self.cfl_constant < 1.0) {
            return Err(Config(format!("cfl_constant {} outside (0, 1)", self.cfl_constant)));
        }
        if !(self.gamma_eos > 1.0) {
            return Err(Config(format!("gamma_eos {} must exceed 1", self.gamma_eos)));
        }
        if !(self.n_ngb_target > 0.0) {
            return Err(Config("n_ngb_target must be positive".into()));
        }
        if !(self.h_max > 0.0) || !(self.h_tolerance > 0.0) || !(self.h_growth >= 1.0) {
            return Err(Config("h_max, h_tolerance must be positive and h_growth >= 1".into()));
        }
        Ok(())
    }
}
