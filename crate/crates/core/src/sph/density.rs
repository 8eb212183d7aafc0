use crate::sph::kernel::w_unchecked;
use crate::vec3::Vec3;
use crate::{Error, Result};

/// Kernel-weighted density and number density of a target with smoothing
/// length `h`, given `(mass, displacement)` of every neighbour including the
/// target itself at zero displacement.
///
/// Terms are summed in the order given; callers that need reproducible bits
/// must supply a fixed order.
pub fn compute_density<I>(h: f64, neighbours: I) -> Result<(f64, f64)>
where
    I: IntoIterator<Item = (f64, Vec3)>,
{
    if !(h > 0.0) {
        return Err(Error::Domain("smoothing length must be positive"));
    }
    let mut rho = 0.0;
    let mut n = 0.0;
    for (m, d) in neighbours {
        let w = w_unchecked(d.norm(), h);
        rho += m * w;
        n += w;
    }
    Ok((rho, n))
}
