//! Cubic spline (M4) kernel with compact support radius 2h.

use core::f64::consts::PI;

use crate::{Error, Result};

/// Dimensionless kernel shape w(q), normalised so that W = w(q) / (pi h^3).
#[inline]
pub fn w_q(q: f64) -> f64 {
    if q < 1.0 {
        1.0 - 1.5 * q * q + 0.75 * q * q * q
    } else if q < 2.0 {
        let t = 2.0 - q;
        0.25 * t * t * t
    } else {
        0.0
    }
}

/// dw/dq.
#[inline]
pub fn dw_q(q: f64) -> f64 {
    if q < 1.0 {
        -3.0 * q + 2.25 * q * q
    } else if q < 2.0 {
        let t = 2.0 - q;
        -0.75 * t * t
    } else {
        0.0
    }
}

/// W(r, h).
pub fn kernel_w(r: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::Domain("smoothing length must be positive"));
    }
    if !(r >= 0.0) {
        return Err(Error::Domain("distance must be non-negative"));
    }
    Ok(w_unchecked(r, h))
}

/// dW/dr at (r, h).
pub fn kernel_grad_w(r: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::Domain("smoothing length must be positive"));
    }
    if !(r >= 0.0) {
        return Err(Error::Domain("distance must be non-negative"));
    }
    Ok(grad_w_unchecked(r, h))
}

#[inline]
pub fn w_unchecked(r: f64, h: f64) -> f64 {
    let hi = 1.0 / h;
    w_q(r * hi) * hi * hi * hi * (1.0 / PI)
}

#[inline]
pub fn grad_w_unchecked(r: f64, h: f64) -> f64 {
    let hi = 1.0 / h;
    dw_q(r * hi) * hi * hi * hi * hi * (1.0 / PI)
}
