//! Sorted projections and the pseudo-Verlet pair sweep.

use alloc::vec::Vec;

use crate::vec3::Vec3;

/// Number of distinct pair axes: sign vectors in {-1,0,1}^3 \ {0}, up to sign.
pub const N_DIRS: usize = 13;

/// Canonical sign vectors, each with its first non-zero component positive.
pub const DIRS: [[i8; 3]; N_DIRS] = [
    [0, 0, 1],
    [0, 1, -1],
    [0, 1, 0],
    [0, 1, 1],
    [1, -1, -1],
    [1, -1, 0],
    [1, -1, 1],
    [1, 0, -1],
    [1, 0, 0],
    [1, 0, 1],
    [1, 1, -1],
    [1, 1, 0],
    [1, 1, 1],
];

pub fn dir_vector(d: usize) -> Vec3 {
    let s = DIRS[d];
    let v = Vec3::new(s[0] as f64, s[1] as f64, s[2] as f64);
    v * (1.0 / v.norm())
}

/// Index of `sign` among the canonical directions and whether it had to be
/// negated to get there. `None` for the zero vector.
pub fn classify(sign: [i8; 3]) -> Option<(usize, bool)> {
    if sign == [0, 0, 0] {
        return None;
    }
    let neg = [-sign[0], -sign[1], -sign[2]];
    if let Some(d) = DIRS.iter().position(|&x| x == sign) {
        Some((d, false))
    } else {
        DIRS.iter().position(|&x| x == neg).map(|d| (d, true))
    }
}

/// Projection of one particle onto a pair axis, with its index local to the
/// sorted cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SortKey {
    pub key: f64,
    pub idx: u32,
}

/// Projections of `positions` onto direction `d`, ascending, ties broken by
/// index.
pub fn sort_keys(positions: impl Iterator<Item = Vec3>, d: usize) -> Vec<SortKey> {
    let axis = dir_vector(d);
    let mut keys: Vec<SortKey> =
        positions.enumerate().map(|(i, p)| SortKey { key: p.dot(axis), idx: i as u32 }).collect();
    keys.sort_unstable_by(|a, b| a.key.total_cmp(&b.key).then(a.idx.cmp(&b.idx)));
    keys
}

/// Visit every `(a, b)` pair whose projections differ by at most `reach`,
/// where `b`'s projections are offset by `b_offset` (the periodic shift
/// projected on the axis). Returns the number of pairs visited.
pub fn traverse_sorted(
    ka: &[SortKey],
    kb: &[SortKey],
    b_offset: f64,
    reach: f64,
    mut visit: impl FnMut(u32, u32),
) -> u64 {
    let mut lo = 0usize;
    let mut visits = 0u64;
    for a in ka {
        let min = a.key - reach;
        let max = a.key + reach;
        while lo < kb.len() && kb[lo].key + b_offset < min {
            lo += 1;
        }
        let mut j = lo;
        while j < kb.len() && kb[j].key + b_offset <= max {
            visit(a.idx, kb[j].idx);
            visits += 1;
            j += 1;
        }
    }
    visits
}
