//! Enumeration of cell pairs that may hold particles within kernel range.

use alloc::vec::Vec;

use crate::tree::build::Tree;
use crate::tree::sort::classify;

/// Interaction radius model: particles interact within twice their smoothing
/// length, which may grow by `growth` during the step but never beyond `h_cap`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reach {
    pub growth: f64,
    pub h_cap: f64,
}

impl Reach {
    pub const EXACT: Reach = Reach { growth: 1.0, h_cap: f64::INFINITY };

    /// Largest particle separation that can matter between two cells whose
    /// largest smoothing lengths are `ha` and `hb`.
    #[inline]
    pub fn radius(&self, ha: f64, hb: f64) -> f64 {
        2.0 * (self.growth * ha.max(hb)).min(self.h_cap)
    }
}

/// A self interaction (`a == b`, zero shift) or a pair of `a` with the image
/// of `b` displaced by `shift` box lengths. Pairs are oriented so that the
/// centre offset from `a` to `b` points along canonical direction `dir`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interaction {
    pub a: u32,
    pub b: u32,
    pub shift: [i8; 3],
    pub dir: u8,
    /// Projection window for the sorted sweep.
    pub reach: f64,
}

impl Interaction {
    #[inline]
    pub fn is_self(&self) -> bool {
        self.a == self.b && self.shift == [0, 0, 0]
    }
}

#[inline]
fn neg(s: [i8; 3]) -> [i8; 3] {
    [-s[0], -s[1], -s[2]]
}

struct Walker<'a> {
    tree: &'a Tree,
    m: u32,
    reach: Reach,
    out: Vec<Interaction>,
}

impl Walker<'_> {
    fn active(&self, c: u32) -> bool {
        let cell = &self.tree.cells[c as usize];
        cell.count > 0 && (cell.min_bin as u32) <= self.m
    }

    fn self_rec(&mut self, a: u32) {
        if !self.active(a) {
            return;
        }
        let cell = &self.tree.cells[a as usize];
        if cell.is_split() {
            let first = cell.first_child;
            for i in 0..8 {
                self.self_rec(first + i);
                for j in i + 1..8 {
                    self.pair_rec(first + i, first + j, [0; 3]);
                }
            }
        } else {
            let h = cell.h_max;
            self.out.push(Interaction { a, b: a, shift: [0; 3], dir: 0, reach: self.reach.radius(h, h) });
        }
    }

    fn pair_rec(&mut self, a: u32, b: u32, s: [i8; 3]) {
        let (ca, cb) = (&self.tree.cells[a as usize], &self.tree.cells[b as usize]);
        if ca.count == 0 || cb.count == 0 || !(self.active(a) || self.active(b)) {
            return;
        }
        let r = self.reach.radius(ca.h_max, cb.h_max);
        if self.tree.box_distance(a, b, s) > r + ca.dx_max + cb.dx_max {
            return;
        }
        match (self.can_recurse(a), self.can_recurse(b)) {
            (true, true) => {
                let (fa, fb) = (ca.first_child, cb.first_child);
                for i in 0..8 {
                    for j in 0..8 {
                        self.pair_rec(fa + i, fb + j, s);
                    }
                }
            }
            (true, false) if self.prunes_children(a, b, s, false) => {
                let fa = ca.first_child;
                for i in 0..8 {
                    self.pair_rec(fa + i, b, s);
                }
            }
            (false, true) if self.prunes_children(b, a, s, true) => {
                let fb = cb.first_child;
                for j in 0..8 {
                    self.pair_rec(a, fb + j, s);
                }
            }
            _ => self.out.push(self.orient(a, b, s, r)),
        }
    }

    /// A pair may descend into a cell's children only while the children are
    /// wide compared with the kernel reach of the cell; otherwise each child
    /// would pair with many tiny cells for a handful of interactions each.
    fn can_recurse(&self, c: u32) -> bool {
        let cell = &self.tree.cells[c as usize];
        let w = cell.width[0].min(cell.width[1]).min(cell.width[2]);
        cell.is_split() && self.reach.radius(cell.h_max, cell.h_max) + cell.dx_max < 0.5 * w
    }

    /// Whether pairing the children of `split` with the leaf `leaf` would
    /// drop an occupied child for range or activity. If not, splitting only
    /// fragments the work and the pair stays whole. `flip` means `split` is
    /// the image side (`b`) of the pair.
    fn prunes_children(&self, split: u32, leaf: u32, s: [i8; 3], flip: bool) -> bool {
        let first = self.tree.cells[split as usize].first_child;
        let cl = &self.tree.cells[leaf as usize];
        let leaf_active = self.active(leaf);
        (first..first + 8).any(|c| {
            let cc = &self.tree.cells[c as usize];
            if cc.count == 0 {
                return false;
            }
            if !leaf_active && !self.active(c) {
                return true;
            }
            let d = if flip { self.tree.box_distance(leaf, c, s) } else { self.tree.box_distance(c, leaf, s) };
            d > self.reach.radius(cc.h_max, cl.h_max) + cc.dx_max + cl.dx_max
        })
    }

    fn orient(&self, a: u32, b: u32, s: [i8; 3], reach: f64) -> Interaction {
        let (ca, cb) = (&self.tree.cells[a as usize], &self.tree.cells[b as usize]);
        let off = cb.centre() + self.tree.shift_vec(s) - ca.centre();
        let w = ca.width[0].min(cb.width[0]).min(ca.width[1].min(cb.width[1])).min(ca.width[2].min(cb.width[2]));
        let tol = 1e-9 * w;
        let sign = [0, 1, 2].map(|k| if off[k] > tol { 1i8 } else if off[k] < -tol { -1 } else { 0 });
        match classify(sign) {
            Some((d, false)) => Interaction { a, b, shift: s, dir: d as u8, reach },
            Some((d, true)) => Interaction { a: b, b: a, shift: neg(s), dir: d as u8, reach },
            None => Interaction { a, b, shift: s, dir: 0, reach },
        }
    }
}

/// All self and pair interactions needed at max active bin `m` (`u32::MAX`
/// for everything): each involves at least one active cell, survives the
/// closest-point distance test, and is emitted at the largest scale at which
/// one of its cells is a leaf, unless splitting the other cell would drop
/// some of its children.
pub fn enumerate_interactions(tree: &Tree, m: u32, reach: Reach) -> Vec<Interaction> {
    let dims = tree.params.top_dims.map(|d| d as i64);
    let mut w = Walker { tree, m, reach, out: Vec::new() };
    for t in 0..tree.n_top() as u32 {
        w.self_rec(t);
        let ti = t as i64;
        let c = [ti % dims[0], (ti / dims[0]) % dims[1], ti / (dims[0] * dims[1])];
        for dz in -1..=1i64 {
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    if (dx, dy, dz) == (0, 0, 0) {
                        continue;
                    }
                    let o = [dx, dy, dz];
                    let mut n = [0i64; 3];
                    let mut s = [0i8; 3];
                    for k in 0..3 {
                        let v = c[k] + o[k];
                        n[k] = v.rem_euclid(dims[k]);
                        s[k] = v.div_euclid(dims[k]) as i8;
                    }
                    let nt = (n[0] + dims[0] * (n[1] + dims[1] * n[2])) as u32;
                    // each unordered image pair is reached from both ends; keep one
                    if (t, nt, s) < (nt, t, neg(s)) {
                        w.pair_rec(t, nt, s);
                    }
                }
            }
        }
    }
    w.out
}
