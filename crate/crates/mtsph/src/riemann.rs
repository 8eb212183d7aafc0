//! Exact solution of the one-dimensional Riemann problem for an ideal gas,
//! used as the oracle for shock-tube runs.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct State {
    pub rho: f64,
    pub u: f64,
    pub p: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Riemann {
    pub left: State,
    pub right: State,
    pub gamma: f64,
    /// Pressure and velocity of the star region.
    pub p_star: f64,
    pub u_star: f64,
}

/// Velocity change across the wave into `s` as a function of star pressure
/// `p`, and its derivative.
fn wave(p: f64, s: &State, g: f64) -> (f64, f64) {
    let c = (g * s.p / s.rho).sqrt();
    if p > s.p {
        let a = 2.0 / ((g + 1.0) * s.rho);
        let b = (g - 1.0) / (g + 1.0) * s.p;
        let q = (a / (p + b)).sqrt();
        ((p - s.p) * q, q * (1.0 - 0.5 * (p - s.p) / (p + b)))
    } else {
        let e = (g - 1.0) / (2.0 * g);
        let r = p / s.p;
        (2.0 * c / (g - 1.0) * (r.powf(e) - 1.0), r.powf(-(g + 1.0) / (2.0 * g)) / (s.rho * c))
    }
}

fn star_residual(p: f64, l: &State, r: &State, g: f64) -> (f64, f64) {
    let (fl, dl) = wave(p, l, g);
    let (fr, dr) = wave(p, r, g);
    (fl + fr + (r.u - l.u), dl + dr)
}

/// Star pressure by Newton iteration from the two-rarefaction guess.
pub fn star_pressure_newton(l: &State, r: &State, g: f64) -> f64 {
    let (cl, cr) = ((g * l.p / l.rho).sqrt(), (g * r.p / r.rho).sqrt());
    let e = (g - 1.0) / (2.0 * g);
    let num = cl + cr - 0.5 * (g - 1.0) * (r.u - l.u);
    let mut p = (num / (cl / l.p.powf(e) + cr / r.p.powf(e))).powf(1.0 / e).max(1e-12);
    for _ in 0..100 {
        let (f, df) = star_residual(p, l, r, g);
        let next = (p - f / df).max(1e-14);
        if 2.0 * (next - p).abs() / (next + p) < 1e-15 {
            return next;
        }
        p = next;
    }
    p
}

/// Star pressure by bisection on a bracket; an independent route to the
/// Newton result.
pub fn star_pressure_bisect(l: &State, r: &State, g: f64) -> f64 {
    let (mut lo, mut hi) = (1e-12, 10.0 * l.p.max(r.p));
    while star_residual(hi, l, r, g).0 < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if star_residual(mid, l, r, g).0 < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl Riemann {
    pub fn new(left: State, right: State, gamma: f64) -> Self {
        let p_star = star_pressure_newton(&left, &right, gamma);
        let u_star = 0.5 * (left.u + right.u) + 0.5 * (wave(p_star, &right, gamma).0 - wave(p_star, &left, gamma).0);
        Riemann { left, right, gamma, p_star, u_star }
    }

    pub fn sod() -> Self {
        Riemann::new(State { rho: 1.0, u: 0.0, p: 1.0 }, State { rho: 0.125, u: 0.0, p: 0.1 }, 1.4)
    }

    /// Solution at similarity coordinate `xi = (x - x0) / t`.
    pub fn sample(&self, xi: f64) -> State {
        let g = self.gamma;
        let (ps, us) = (self.p_star, self.u_star);
        let gm = (g - 1.0) / (g + 1.0);
        if xi <= us {
            let s = self.left;
            let c = (g * s.p / s.rho).sqrt();
            if ps > s.p {
                let speed = s.u - c * ((g + 1.0) / (2.0 * g) * ps / s.p + (g - 1.0) / (2.0 * g)).sqrt();
                if xi < speed {
                    s
                } else {
                    State { rho: s.rho * (ps / s.p + gm) / (gm * ps / s.p + 1.0), u: us, p: ps }
                }
            } else {
                let c_star = c * (ps / s.p).powf((g - 1.0) / (2.0 * g));
                if xi < s.u - c {
                    s
                } else if xi > us - c_star {
                    State { rho: s.rho * (ps / s.p).powf(1.0 / g), u: us, p: ps }
                } else {
                    let k = 2.0 / (g + 1.0) + gm / c * (s.u - xi);
                    State { rho: s.rho * k.powf(2.0 / (g - 1.0)), u: 2.0 / (g + 1.0) * (c + (g - 1.0) / 2.0 * s.u + xi), p: s.p * k.powf(2.0 * g / (g - 1.0)) }
                }
            }
        } else {
            let s = self.right;
            let c = (g * s.p / s.rho).sqrt();
            if ps > s.p {
                let speed = s.u + c * ((g + 1.0) / (2.0 * g) * ps / s.p + (g - 1.0) / (2.0 * g)).sqrt();
                if xi > speed {
                    s
                } else {
                    State { rho: s.rho * (ps / s.p + gm) / (gm * ps / s.p + 1.0), u: us, p: ps }
                }
            } else {
                let c_star = c * (ps / s.p).powf((g - 1.0) / (2.0 * g));
                if xi > s.u + c {
                    s
                } else if xi < us + c_star {
                    State { rho: s.rho * (ps / s.p).powf(1.0 / g), u: us, p: ps }
                } else {
                    let k = 2.0 / (g + 1.0) - gm / c * (s.u - xi);
                    State { rho: s.rho * k.powf(2.0 / (g - 1.0)), u: 2.0 / (g + 1.0) * (-c + (g - 1.0) / 2.0 * s.u + xi), p: s.p * k.powf(2.0 * g / (g - 1.0)) }
                }
            }
        }
    }

    pub fn density(&self, x: f64, x0: f64, t: f64) -> f64 {
        self.sample((x - x0) / t).rho
    }
}
