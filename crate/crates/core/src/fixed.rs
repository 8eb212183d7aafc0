//! Order-independent accumulation.
//!
//! Per-particle sums collected from many pair tasks would otherwise depend on
//! the order in which the scheduler happened to run those tasks. Each partial
//! sum is rounded once to a fixed-point grid of 2^-64 and added as an integer,
//! which is associative, so the final value is identical for any worker count,
//! rank count or task order.

const SCALE: f64 = 18446744073709551616.0; // 2^64
const INV_SCALE: f64 = 1.0 / SCALE;
/// Largest magnitude representable without overflow headroom problems.
pub const FIXED_LIMIT: f64 = 1.0e18;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FixedSum(i128);

impl FixedSum {
    pub const ZERO: FixedSum = FixedSum(0);

    #[inline]
    pub fn add(&mut self, x: f64) {
        debug_assert!(x.is_finite(), "non-finite contribution {x}");
        let c = x.clamp(-FIXED_LIMIT, FIXED_LIMIT);
        self.0 += libm::round(c * SCALE) as i128;
    }

    #[inline]
    pub fn value(self) -> f64 {
        // split to keep the low bits when the integer exceeds 2^53
        let hi = (self.0 >> 64) as f64;
        let lo = (self.0 & 0xFFFF_FFFF_FFFF_FFFF) as u64 as f64;
        hi + lo * INV_SCALE
    }

    #[inline]
    pub fn reset(&mut self) {
        self.0 = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn round_trips_ordinary_values() {
        for &x in &[0.0, 1.0, -2.5, 1e-9, 123456.789, -7.25e12] {
            let mut s = FixedSum::ZERO;
            s.add(x);
            let v = s.value();
            assert!((v - x).abs() <= 1e-15 * x.abs().max(1e-4), "{x} -> {v}");
        }
    }

    proptest! {
        #[test]
        fn sum_is_order_independent(mut xs in proptest::collection::vec(-1e6f64..1e6, 0..64), seed in 0u64..1000) {
            let mut a = FixedSum::ZERO;
            for &x in &xs { a.add(x); }
            // deterministic shuffle
            let n = xs.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                xs.swap(i, (s >> 33) as usize % (i + 1));
            }
            let mut b = FixedSum::ZERO;
            for &x in &xs { b.add(x); }
            prop_assert_eq!(a, b);
        }
    }
}
