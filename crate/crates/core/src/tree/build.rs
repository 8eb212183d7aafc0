use alloc::vec;
use alloc::vec::Vec;

use crate::vec3::Vec3;
use crate::{Error, Result};

pub const NO_CELL: u32 = u32::MAX;
/// min_bin of a cell holding no particles.
pub const EMPTY_BIN: u8 = u8::MAX;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeParams {
    pub top_dims: [usize; 3],
    pub split_threshold: usize,
    pub max_depth: u8,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { top_dims: [1, 1, 1], split_threshold: 400, max_depth: 10 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub lo: Vec3,
    pub width: Vec3,
    pub depth: u8,
    pub start: u32,
    pub count: u32,
    /// Index of the first of eight consecutive children, or `NO_CELL`.
    pub first_child: u32,
    pub parent: u32,
    pub top: u32,
    pub h_max: f64,
    pub min_bin: u8,
    pub dx_max: f64,
}

impl Cell {
    #[inline]
    pub fn is_split(&self) -> bool {
        self.first_child != NO_CELL
    }

    #[inline]
    pub fn children(&self) -> core::ops::Range<u32> {
        if self.is_split() {
            self.first_child..self.first_child + 8
        } else {
            0..0
        }
    }

    #[inline]
    pub fn range(&self) -> core::ops::Range<usize> {
        self.start as usize..(self.start + self.count) as usize
    }

    #[inline]
    pub fn centre(&self) -> Vec3 {
        self.lo + self.width * 0.5
    }
}

/// Cell hierarchy over a particle array ordered so that every cell owns a
/// contiguous index range. Top-level cells occupy indices `0..n_top` in grid
/// order `i + nx (j + ny k)`; the descendants of top cell `t` occupy the block
/// `blocks[t]`, with every child stored after its parent.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    pub boxsize: Vec3,
    pub params: TreeParams,
    pub cells: Vec<Cell>,
    pub blocks: Vec<(u32, u32)>,
}

impl Tree {
    /// Bucket `positions` into the grid and refine. Returns the tree and the
    /// permutation `perm[new_index] = old_index`; particles keep their input
    /// order within each leaf.
    pub fn build(positions: &[Vec3], boxsize: Vec3, params: TreeParams) -> Result<(Tree, Vec<u32>)> {
        let dims = params.top_dims;
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Config("top-level grid dimensions must be positive".into()));
        }
        let n_top = dims[0] * dims[1] * dims[2];
        let edge = Vec3::new(
            boxsize[0] / dims[0] as f64,
            boxsize[1] / dims[1] as f64,
            boxsize[2] / dims[2] as f64,
        );
        let mut top_of = Vec::with_capacity(positions.len());
        for (i, p) in positions.iter().enumerate() {
            let mut idx = [0usize; 3];
            for k in 0..3 {
                if !(p[k] >= 0.0 && p[k] < boxsize[k]) {
                    return Err(Error::OutsideBox { id: i as u64, pos: p.0 });
                }
                idx[k] = ((p[k] / edge[k]) as usize).min(dims[k] - 1);
            }
            top_of.push(idx[0] + dims[0] * (idx[1] + dims[1] * idx[2]));
        }
        // stable counting sort by top cell
        let mut counts = vec![0u32; n_top + 1];
        for &t in &top_of {
            counts[t + 1] += 1;
        }
        for t in 0..n_top {
            counts[t + 1] += counts[t];
        }
        let starts = counts.clone();
        let mut perm = vec![0u32; positions.len()];
        let mut fill = counts;
        for (i, &t) in top_of.iter().enumerate() {
            perm[fill[t] as usize] = i as u32;
            fill[t] += 1;
        }

        let mut cells = Vec::with_capacity(n_top);
        for t in 0..n_top {
            let (i, j, k) = (t % dims[0], (t / dims[0]) % dims[1], t / (dims[0] * dims[1]));
            cells.push(Cell {
                lo: Vec3::new(i as f64 * edge[0], j as f64 * edge[1], k as f64 * edge[2]),
                width: edge,
                depth: 0,
                start: starts[t],
                count: starts[t + 1] - starts[t],
                first_child: NO_CELL,
                parent: NO_CELL,
                top: t as u32,
                h_max: 0.0,
                min_bin: EMPTY_BIN,
                dx_max: 0.0,
            });
        }
        let mut blocks = Vec::with_capacity(n_top);
        let mut scratch = Vec::new();
        for t in 0..n_top {
            let begin = cells.len() as u32;
            split(&mut cells, t as u32, positions, &mut perm, &mut scratch, &params);
            blocks.push((begin, cells.len() as u32));
        }
        Ok((Tree { boxsize, params, cells, blocks }, perm))
    }

    #[inline]
    pub fn n_top(&self) -> usize {
        self.blocks.len()
    }

    /// Edge of a top-level cell along its shortest axis.
    pub fn top_edge(&self) -> f64 {
        let w = self.cells[0].width;
        w[0].min(w[1]).min(w[2])
    }

    /// Vector offset of a periodic image shift.
    #[inline]
    pub fn shift_vec(&self, s: [i8; 3]) -> Vec3 {
        Vec3::new(s[0] as f64 * self.boxsize[0], s[1] as f64 * self.boxsize[1], s[2] as f64 * self.boxsize[2])
    }

    /// Closest-point distance between cell `a` and the image of cell `b`
    /// shifted by `s`.
    pub fn box_distance(&self, a: u32, b: u32, s: [i8; 3]) -> f64 {
        let (ca, cb) = (&self.cells[a as usize], &self.cells[b as usize]);
        let sv = self.shift_vec(s);
        let mut d2 = 0.0;
        for k in 0..3 {
            let (alo, ahi) = (ca.lo[k], ca.lo[k] + ca.width[k]);
            let (blo, bhi) = (cb.lo[k] + sv[k], cb.lo[k] + cb.width[k] + sv[k]);
            let gap = (blo - ahi).max(alo - bhi).max(0.0);
            d2 += gap * gap;
        }
        libm::sqrt(d2)
    }

    /// Every cell of top cell `t`'s subtree, root first.
    pub fn subtree(&self, t: u32) -> impl Iterator<Item = u32> + '_ {
        let (b, e) = self.blocks[t as usize];
        core::iter::once(t).chain(b..e)
    }

    pub fn is_ancestor(&self, anc: u32, mut c: u32) -> bool {
        while c != NO_CELL {
            if c == anc {
                return true;
            }
            c = self.cells[c as usize].parent;
        }
        false
    }

    /// Recompute h_max, min_bin and dx_max of top cell `t` and its subtree
    /// from per-particle values `agg(i) = (h, bin, dx)`.
    pub fn refresh_top(&mut self, t: u32, agg: impl Fn(usize) -> (f64, u8, f64)) {
        let (b, e) = self.blocks[t as usize];
        for c in (b..e).rev().chain(core::iter::once(t)) {
            self.refresh_cell(c, &agg);
        }
    }

    pub fn refresh_all(&mut self, agg: impl Fn(usize) -> (f64, u8, f64)) {
        for t in 0..self.n_top() as u32 {
            self.refresh_top(t, &agg);
        }
    }

    fn refresh_cell(&mut self, c: u32, agg: &impl Fn(usize) -> (f64, u8, f64)) {
        let cell = &self.cells[c as usize];
        let (mut h, mut bin, mut dx) = (0.0f64, EMPTY_BIN, 0.0f64);
        if cell.is_split() {
            for ch in cell.children() {
                let k = &self.cells[ch as usize];
                h = h.max(k.h_max);
                bin = bin.min(k.min_bin);
                dx = dx.max(k.dx_max);
            }
        } else {
            for i in cell.range() {
                let (hi, bi, di) = agg(i);
                h = h.max(hi);
                bin = bin.min(bi);
                dx = dx.max(di);
            }
        }
        let cell = &mut self.cells[c as usize];
        cell.h_max = h;
        cell.min_bin = bin;
        cell.dx_max = dx;
    }

    pub fn leaves(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.cells.len() as u32).filter(|&c| !self.cells[c as usize].is_split())
    }
}

fn split(
    cells: &mut Vec<Cell>,
    c: u32,
    positions: &[Vec3],
    perm: &mut [u32],
    scratch: &mut Vec<u32>,
    params: &TreeParams,
) {
    let cell = cells[c as usize].clone();
    if (cell.count as usize) < params.split_threshold || cell.depth >= params.max_depth {
        return;
    }
    let mid = cell.centre();
    let octant = |i: u32| {
        let p = positions[i as usize];
        (p[0] >= mid[0]) as usize | ((p[1] >= mid[1]) as usize) << 1 | ((p[2] >= mid[2]) as usize) << 2
    };
    let range = cell.range();
    let mut counts = [0u32; 9];
    for &i in &perm[range.clone()] {
        counts[octant(i) + 1] += 1;
    }
    for o in 0..8 {
        counts[o + 1] += counts[o];
    }
    scratch.clear();
    scratch.resize(cell.count as usize, 0);
    let mut fill = counts;
    for &i in &perm[range.clone()] {
        let o = octant(i);
        scratch[fill[o] as usize] = i;
        fill[o] += 1;
    }
    perm[range].copy_from_slice(scratch);

    let first = cells.len() as u32;
    cells[c as usize].first_child = first;
    let half = cell.width * 0.5;
    for o in 0..8 {
        let off = Vec3::new((o & 1) as f64, ((o >> 1) & 1) as f64, ((o >> 2) & 1) as f64);
        cells.push(Cell {
            lo: cell.lo + off.zip(half, |a, b| a * b),
            width: half,
            depth: cell.depth + 1,
            start: cell.start + counts[o],
            count: counts[o + 1] - counts[o],
            first_child: NO_CELL,
            parent: c,
            top: cell.top,
            h_max: 0.0,
            min_bin: EMPTY_BIN,
            dx_max: 0.0,
        });
    }
    for o in 0..8 {
        split(cells, first + o, positions, perm, scratch, params);
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn rng(seed: u64) -> impl FnMut() -> f64 {
        let mut s = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
        move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64
        }
    }

    pub(crate) fn random_positions(n: usize, boxsize: Vec3, seed: u64) -> Vec<Vec3> {
        let mut r = rng(seed);
        (0..n).map(|_| Vec3::new(r() * boxsize[0], r() * boxsize[1], r() * boxsize[2])).collect()
    }

    fn check_layout(tree: &Tree, positions: &[Vec3], perm: &[u32]) {
        let mut seen = vec![false; positions.len()];
        for &p in perm {
            assert!(!seen[p as usize]);
            seen[p as usize] = true;
        }
        for (ci, c) in tree.cells.iter().enumerate() {
            for i in c.range() {
                let p = positions[perm[i] as usize];
                for k in 0..3 {
                    assert!(p[k] >= c.lo[k] - 1e-12 && p[k] < c.lo[k] + c.width[k] + 1e-12, "cell {ci}");
                }
            }
            if c.is_split() {
                let mut next = c.start;
                for ch in c.children() {
                    let k = &tree.cells[ch as usize];
                    assert_eq!(k.start, next);
                    assert_eq!(k.parent, ci as u32);
                    assert!(ch as usize > ci);
                    next += k.count;
                }
                assert_eq!(next, c.start + c.count);
            } else {
                assert!((c.count as usize) < tree.params.split_threshold || c.depth == tree.params.max_depth);
            }
        }
    }

    #[test]
    fn small_cell_stays_a_leaf() {
        let pos = random_positions(300, Vec3::splat(1.0), 1);
        let (tree, perm) = Tree::build(&pos, Vec3::splat(1.0), TreeParams::default()).unwrap();
        assert_eq!(tree.cells.len(), 1);
        assert!(!tree.cells[0].is_split());
        check_layout(&tree, &pos, &perm);
    }

    #[test]
    fn thousand_particles_split_once() {
        let pos = random_positions(1000, Vec3::splat(1.0), 2);
        let (tree, perm) = Tree::build(&pos, Vec3::splat(1.0), TreeParams::default()).unwrap();
        assert!(tree.cells[0].is_split());
        assert_eq!(tree.cells.len(), 9);
        for ch in tree.cells[0].children() {
            assert!((tree.cells[ch as usize].count as usize) < 400);
        }
        check_layout(&tree, &pos, &perm);
    }

    #[test]
    fn empty_top_cell_is_empty_leaf() {
        let pos = vec![Vec3::new(0.1, 0.1, 0.1)];
        let params = TreeParams { top_dims: [2, 2, 2], ..Default::default() };
        let (mut tree, _) = Tree::build(&pos, Vec3::splat(1.0), params).unwrap();
        tree.refresh_all(|_| (0.3, 2, 0.0));
        let c = &tree.cells[7];
        assert_eq!(c.count, 0);
        assert_eq!(c.h_max, 0.0);
        assert_eq!(c.min_bin, EMPTY_BIN);
        assert_eq!(tree.cells[0].h_max, 0.3);
    }

    #[test]
    fn grid_order_puts_z_slowest() {
        let pos = vec![Vec3::new(0.9, 0.1, 0.1), Vec3::new(0.1, 0.9, 0.1), Vec3::new(0.1, 0.1, 0.9)];
        let params = TreeParams { top_dims: [2, 2, 2], ..Default::default() };
        let (tree, perm) = Tree::build(&pos, Vec3::splat(1.0), params).unwrap();
        assert_eq!(tree.cells[1].count, 1);
        assert_eq!(tree.cells[2].count, 1);
        assert_eq!(tree.cells[4].count, 1);
        assert_eq!(perm, vec![0, 1, 2]);
    }

    #[test]
    fn outside_box_is_rejected() {
        let pos = vec![Vec3::new(1.0, 0.5, 0.5)];
        assert!(matches!(
            Tree::build(&pos, Vec3::splat(1.0), TreeParams::default()),
            Err(Error::OutsideBox { .. })
        ));
    }

    #[test]
    fn clustered_input_respects_depth_guard() {
        let mut pos = random_positions(500, Vec3::splat(1.0), 3);
        for p in pos.iter_mut() {
            *p = Vec3::splat(0.3) + (*p - Vec3::splat(0.5)) * 1e-9;
        }
        let params = TreeParams { max_depth: 4, ..Default::default() };
        let (tree, perm) = Tree::build(&pos, Vec3::splat(1.0), params).unwrap();
        assert!(tree.cells.iter().all(|c| c.depth <= 4));
        check_layout(&tree, &pos, &perm);
    }

    #[test]
    fn aggregates_are_monotone() {
        let pos = random_positions(5000, Vec3::new(1.0, 2.0, 1.0), 4);
        let params = TreeParams { top_dims: [2, 3, 1], split_threshold: 50, ..Default::default() };
        let (mut tree, perm) = Tree::build(&pos, Vec3::new(1.0, 2.0, 1.0), params).unwrap();
        check_layout(&tree, &pos, &perm);
        let mut r = rng(9);
        let vals: Vec<(f64, u8, f64)> = (0..pos.len()).map(|_| (r(), (r() * 20.0) as u8, r())).collect();
        tree.refresh_all(|i| vals[i]);
        for c in &tree.cells {
            for ch in c.children() {
                let k = &tree.cells[ch as usize];
                assert!(c.h_max >= k.h_max);
                assert!(c.min_bin <= k.min_bin);
                assert!(c.dx_max >= k.dx_max);
            }
            for i in c.range() {
                assert!(c.h_max >= vals[i].0);
            }
        }
    }

    #[test]
    fn build_is_deterministic() {
        let pos = random_positions(3000, Vec3::splat(1.0), 5);
        let params = TreeParams { top_dims: [3, 3, 3], split_threshold: 40, ..Default::default() };
        let a = Tree::build(&pos, Vec3::splat(1.0), params).unwrap();
        let b = Tree::build(&pos, Vec3::splat(1.0), params).unwrap();
        assert_eq!(a, b);
    }
}
