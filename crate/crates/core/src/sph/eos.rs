//! Ideal-gas equation of state.

use crate::{Error, Result};

/// P = (gamma - 1) rho u.
#[inline]
pub fn pressure(rho: f64, u: f64, gamma: f64) -> f64 {
    (gamma - 1.0) * rho * u
}

/// c = sqrt(gamma (gamma - 1) u).
pub fn sound_speed(u: f64, gamma: f64) -> Result<f64> {
    if u < 0.0 || u.is_nan() {
        return Err(Error::Domain("internal energy must be non-negative"));
    }
    Ok(libm::sqrt(gamma * (gamma - 1.0) * u))
}
