//! Multilevel graph partitioner: heavy-edge matching down to at most `8R`
//! nodes, a small portfolio of initial partitions (greedy region growth from
//! spread seeds, weight-balanced blocks in cell index order, and exhaustive
//! search when the coarsest graph is small enough), then projection back
//! through the levels with balancing and boundary Kernighan-Lin refinement
//! at each level. Several such cycles with different matching orders run
//! per call. A recursive spectral bisection of the finest graph joins the
//! portfolio, refined at the finest level only.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::decomp::{CellGraph, Partition};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartitionOptions {
    /// Allowed excess of the heaviest rank over the mean, as a fraction.
    pub balance_tol: f64,
    /// Rotates the first region-growth seed.
    pub seed: u64,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        PartitionOptions { balance_tol: 0.05, seed: 0 }
    }
}

struct Level {
    g: CellGraph,
    /// Fine node -> coarse node of the next level.
    map: Vec<u32>,
}

fn coarsen(g: &CellGraph, cap: f64, seed: u64) -> (CellGraph, Vec<u32>) {
    let n = g.len();
    let mut mate = vec![u32::MAX; n];
    let start = (seed % n.max(1) as u64) as usize;
    for k in 0..n {
        let u = (start + k) % n;
        if mate[u] != u32::MAX {
            continue;
        }
        let mut best: Option<(f64, f64, u32)> = None;
        for &(v, w) in &g.adj[u] {
            let vw = g.node_w[v as usize];
            if mate[v as usize] != u32::MAX || g.node_w[u] + vw > cap {
                continue;
            }
            let better = match best {
                None => true,
                Some((bw, bvw, bv)) => w > bw || (w == bw && (vw < bvw || (vw == bvw && v < bv))),
            };
            if better {
                best = Some((w, vw, v));
            }
        }
        match best {
            Some((_, _, v)) => {
                mate[u] = v;
                mate[v as usize] = u as u32;
            }
            None => mate[u] = u as u32,
        }
    }
    let mut map = vec![u32::MAX; n];
    let mut node_w = Vec::new();
    for u in 0..n {
        if map[u] == u32::MAX {
            let c = node_w.len() as u32;
            map[u] = c;
            let v = mate[u] as usize;
            map[v] = c;
            node_w.push(if v == u { g.node_w[u] } else { g.node_w[u] + g.node_w[v] });
        }
    }
    let edges: Vec<(u32, u32, f64)> = g.edges.iter().map(|&(u, v, w)| (map[u as usize], map[v as usize], w)).collect();
    (CellGraph::from_edges(node_w, &edges), map)
}

fn part_weights(g: &CellGraph, a: &[u16], r: usize) -> Vec<f64> {
    let mut w = vec![0.0; r];
    for (i, &p) in a.iter().enumerate() {
        w[p as usize] += g.node_w[i];
    }
    w
}

fn cut(g: &CellGraph, a: &[u16]) -> f64 {
    g.edges.iter().filter(|e| a[e.0 as usize] != a[e.1 as usize]).map(|e| e.2).sum()
}

/// Hop distances from `src` (unreachable nodes get `usize::MAX`).
fn bfs(g: &CellGraph, src: usize) -> Vec<usize> {
    let mut d = vec![usize::MAX; g.len()];
    d[src] = 0;
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        for &(v, _) in &g.adj[u] {
            if d[v as usize] == usize::MAX {
                d[v as usize] = d[u] + 1;
                q.push_back(v as usize);
            }
        }
    }
    d
}

/// Seeds chosen farthest-first, the first one given.
fn spread_seeds(g: &CellGraph, r: usize, first: usize) -> Vec<usize> {
    let n = g.len();
    let mut seeds = vec![first];
    let mut dist = bfs(g, first);
    while seeds.len() < r {
        let next = (0..n).filter(|i| !seeds.contains(i)).max_by_key(|&i| (dist[i], core::cmp::Reverse(i))).unwrap();
        seeds.push(next);
        let d2 = bfs(g, next);
        for i in 0..n {
            dist[i] = dist[i].min(d2[i]);
        }
    }
    seeds
}

/// Grow `r` regions from spread seeds, always extending the lightest region
/// by its most strongly connected unassigned neighbour.
fn region_growth(g: &CellGraph, r: usize, first: usize) -> Vec<u16> {
    let n = g.len();
    const FREE: u16 = u16::MAX;
    let mut a = vec![FREE; n];
    let mut w = vec![0.0; r];
    let mut conn = vec![vec![0.0f64; n]; r];
    let assign = |a: &mut Vec<u16>, w: &mut Vec<f64>, conn: &mut Vec<Vec<f64>>, u: usize, p: usize| {
        a[u] = p as u16;
        w[p] += g.node_w[u];
        for &(v, ew) in &g.adj[u] {
            conn[p][v as usize] += ew;
        }
    };
    for (p, &s) in spread_seeds(g, r, first).iter().enumerate() {
        assign(&mut a, &mut w, &mut conn, s, p);
    }
    let mut left = n - r;
    while left > 0 {
        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by(|&x, &y| w[x].total_cmp(&w[y]).then(x.cmp(&y)));
        let mut placed = false;
        for &p in &order {
            let best = (0..n).filter(|&v| a[v] == FREE && conn[p][v] > 0.0).max_by(|&x, &y| {
                conn[p][x].total_cmp(&conn[p][y]).then(y.cmp(&x))
            });
            if let Some(v) = best {
                assign(&mut a, &mut w, &mut conn, v, p);
                placed = true;
                break;
            }
        }
        if !placed {
            // disconnected remainder: lightest region takes the first free node
            let v = (0..n).find(|&v| a[v] == FREE).unwrap();
            assign(&mut a, &mut w, &mut conn, v, order[0]);
        }
        left -= 1;
    }
    a
}

/// Approximate Fiedler vector of the weighted Laplacian restricted to
/// `nodes`, by power iteration on `sigma I - L` with the constant vector
/// projected out. Entries are indexed like `nodes`.
fn fiedler(g: &CellGraph, nodes: &[usize]) -> Vec<f64> {
    let m = nodes.len();
    let mut local = vec![u32::MAX; g.len()];
    for (k, &u) in nodes.iter().enumerate() {
        local[u] = k as u32;
    }
    let adj: Vec<Vec<(usize, f64)>> = nodes
        .iter()
        .map(|&u| {
            g.adj[u].iter().filter(|(v, _)| local[*v as usize] != u32::MAX).map(|&(v, w)| (local[v as usize] as usize, w)).collect()
        })
        .collect();
    let deg: Vec<f64> = adj.iter().map(|e| e.iter().map(|x| x.1).sum()).collect();
    let sigma = 2.0 * deg.iter().cloned().fold(0.0, f64::max) + 1e-12;
    let normalise = |x: &mut [f64]| {
        let mean = x.iter().sum::<f64>() / m as f64;
        x.iter_mut().for_each(|v| *v -= mean);
        let norm = libm::sqrt(x.iter().map(|v| v * v).sum::<f64>());
        if norm > 0.0 {
            x.iter_mut().for_each(|v| *v /= norm);
        }
    };
    // golden-ratio sequence: deterministic and not orthogonal to low modes
    let mut x: Vec<f64> = (0..m).map(|k| ((k as f64 + 1.0) * 0.618_033_988_749_894_9) % 1.0 - 0.5).collect();
    normalise(&mut x);
    let mut y = vec![0.0; m];
    for _ in 0..2000 {
        for k in 0..m {
            let lx: f64 = deg[k] * x[k] - adj[k].iter().map(|&(j, w)| w * x[j]).sum::<f64>();
            y[k] = sigma * x[k] - lx;
        }
        normalise(&mut y);
        let change = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        core::mem::swap(&mut x, &mut y);
        if change < 1e-18 {
            break;
        }
    }
    x
}

/// Split `nodes` into `r` parts by recursive spectral bisection: each half is
/// a weight-balanced prefix of the nodes sorted by their Fiedler entries.
fn spectral_bisection(g: &CellGraph, nodes: Vec<usize>, r: usize, first_part: u16, a: &mut [u16]) {
    if r == 1 || nodes.len() <= 1 {
        for &u in &nodes {
            a[u] = first_part;
        }
        return;
    }
    let f = fiedler(g, &nodes);
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by(|&x, &y| f[x].total_cmp(&f[y]).then(nodes[x].cmp(&nodes[y])));
    let mut sorted: Vec<usize> = order.iter().map(|&k| nodes[k]).collect();
    let r_lo = r / 2;
    let total: f64 = sorted.iter().map(|&u| g.node_w[u]).sum();
    let target = total * r_lo as f64 / r as f64;
    let mut acc = 0.0;
    let mut cut_at = 0;
    while cut_at < sorted.len() && (cut_at < r_lo || acc + 0.5 * g.node_w[sorted[cut_at]] <= target) {
        acc += g.node_w[sorted[cut_at]];
        cut_at += 1;
    }
    let cut_at = cut_at.min(sorted.len() - (r - r_lo)).max(r_lo);
    let hi = sorted.split_off(cut_at);
    spectral_bisection(g, sorted, r_lo, first_part, a);
    spectral_bisection(g, hi, r - r_lo, first_part + r_lo as u16, a);
}

/// Exhaustive search over all assignments of a small graph: the lowest cut
/// whose heaviest part is within `limit`, or the most balanced assignment
/// when none is. `None` when there are more than `max_assignments`.
fn exhaustive(g: &CellGraph, r: usize, limit: f64, max_assignments: u64) -> Option<Vec<u16>> {
    let n = g.len();
    let total = (r as u64).checked_pow(n as u32).filter(|&t| t <= max_assignments)?;
    let mut a = vec![0u16; n];
    let mut best: Option<(bool, f64, f64, Vec<u16>)> = None;
    // fixing node 0 to part 0 removes relabelled duplicates of each split
    for _ in 0..total / r as u64 {
        let heaviest = part_weights(g, &a, r).into_iter().fold(0.0, f64::max);
        let feasible = heaviest <= limit;
        let c = cut(g, &a);
        let better = match &best {
            None => true,
            Some((bf, bc, bh, _)) => {
                (feasible && !bf) || (feasible && *bf && c < *bc) || (!feasible && !bf && heaviest < *bh)
            }
        };
        if better {
            best = Some((feasible, c, heaviest, a.clone()));
        }
        let mut k = 1;
        while k < n && a[k] as usize == r - 1 {
            a[k] = 0;
            k += 1;
        }
        if k < n {
            a[k] += 1;
        }
    }
    best.map(|b| b.3)
}

/// Contiguous runs of nodes in index order with balanced weight.
fn index_blocks(g: &CellGraph, r: usize, order: &[usize]) -> Vec<u16> {
    let total = g.total_weight();
    let mut a = vec![0u16; g.len()];
    let mut acc = 0.0;
    let mut p = 0usize;
    for (k, &u) in order.iter().enumerate() {
        let remaining_nodes = order.len() - k;
        let w = g.node_w[u];
        // move on once this block reached its share, keeping a node for every later block
        if p + 1 < r && (acc + 0.5 * w > total * (p + 1) as f64 / r as f64 || remaining_nodes <= r - 1 - p) && acc > 0.0 {
            p += 1;
        }
        a[u] = p as u16;
        acc += w;
    }
    a
}

/// Move nodes out of overweight parts, preferring moves that cost the least
/// cut, until the heaviest part is within `limit` or no move helps.
fn balance(g: &CellGraph, a: &mut [u16], r: usize, limit: f64) {
    let mut w = part_weights(g, a, r);
    for _ in 0..4 * g.len() {
        let heavy = (0..r).max_by(|&x, &y| w[x].total_cmp(&w[y]).then(y.cmp(&x))).unwrap();
        if w[heavy] <= limit {
            return;
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for u in 0..g.len() {
            if a[u] as usize != heavy {
                continue;
            }
            let nw = g.node_w[u];
            let mut conn = vec![0.0; r];
            for &(v, ew) in &g.adj[u] {
                conn[a[v as usize] as usize] += ew;
            }
            for q in 0..r {
                // the move must lower the heaviest of the two parts involved
                if q == heavy || w[q] + nw >= w[heavy] {
                    continue;
                }
                let gain = conn[q] - conn[heavy];
                let better = match best {
                    None => true,
                    Some((bg, _, _)) => gain > bg,
                };
                if better {
                    best = Some((gain, u, q));
                }
            }
        }
        let Some((_, u, q)) = best else { return };
        w[a[u] as usize] -= g.node_w[u];
        w[q] += g.node_w[u];
        a[u] = q as u16;
    }
}

/// Boundary Kernighan-Lin refinement in Fiduccia-Mattheyses passes. Each
/// pass repeatedly moves the unlocked boundary node with the best cut gain
/// (possibly negative) to its most connected other part, as long as that
/// part stays within `limit` (or ends up no heavier than the source was),
/// then rolls back to the prefix of moves with the lowest cut. Passes repeat
/// while they improve the cut.
fn refine(g: &CellGraph, a: &mut [u16], r: usize, limit: f64) {
    let n = g.len();
    // stop a pass after this many moves without a new best
    let patience = 64.max(n / 16);
    for _ in 0..16 {
        let start = a.to_vec();
        let start_cut = cut(g, a);
        let mut w = part_weights(g, a, r);
        let mut conn = vec![0.0; n * r];
        for u in 0..n {
            for &(v, ew) in &g.adj[u] {
                conn[u * r + a[v as usize] as usize] += ew;
            }
        }
        let mut locked = vec![false; n];
        let mut moves: Vec<(usize, u16)> = Vec::new();
        let (mut gain_sum, mut best_gain, mut best_len) = (0.0, 0.0, 0);
        while moves.len() < best_len + patience {
            let mut best: Option<(f64, usize, usize)> = None;
            for u in 0..n {
                if locked[u] {
                    continue;
                }
                let p = a[u] as usize;
                let row = &conn[u * r..(u + 1) * r];
                let nw = g.node_w[u];
                for q in 0..r {
                    if q == p || row[q] <= 0.0 || !(w[q] + nw <= limit || w[q] + nw <= w[p]) {
                        continue;
                    }
                    let gain = row[q] - row[p];
                    if best.is_none_or(|(bg, _, _)| gain > bg) {
                        best = Some((gain, u, q));
                    }
                }
            }
            let Some((gain, u, q)) = best else { break };
            let p = a[u] as usize;
            w[p] -= g.node_w[u];
            w[q] += g.node_w[u];
            a[u] = q as u16;
            locked[u] = true;
            for &(v, ew) in &g.adj[u] {
                conn[v as usize * r + p] -= ew;
                conn[v as usize * r + q] += ew;
            }
            moves.push((u, p as u16));
            gain_sum += gain;
            if gain_sum > best_gain {
                best_gain = gain_sum;
                best_len = moves.len();
            }
        }
        for &(u, p) in moves[best_len..].iter().rev() {
            a[u] = p;
        }
        // gains are summed in floating point; trust only a recomputed cut
        if best_len == 0 || !(cut(g, a) < start_cut) {
            a.copy_from_slice(&start);
            return;
        }
    }
}

fn improve(g: &CellGraph, a: &mut [u16], r: usize, limit: f64) {
    balance(g, a, r, limit);
    refine(g, a, r, limit);
}

/// One multilevel cycle: coarsen with a matching order set by `seed`,
/// partition the coarsest graph several ways, and project each result back
/// with balancing and refinement at every level.
fn multilevel(base: &CellGraph, r: usize, limit: f64, seed: u64) -> Vec<Vec<u16>> {
    let n = base.len();
    let total = base.total_weight();
    let mut levels: Vec<Level> = Vec::new();
    let mut cur = base.clone();
    while cur.len() > 8 * r {
        let (next, map) = coarsen(&cur, total / (4 * r) as f64, seed);
        if next.len() as f64 > 0.95 * cur.len() as f64 {
            break;
        }
        levels.push(Level { g: core::mem::replace(&mut cur, next), map });
    }
    let coarsest = cur;

    // lowest original index represented by each coarse node
    let mut rep: Vec<usize> = (0..n).collect();
    for lv in &levels {
        let mut next = vec![usize::MAX; lv.map.iter().map(|&c| c as usize + 1).max().unwrap_or(0)];
        for (f, &c) in lv.map.iter().enumerate() {
            next[c as usize] = next[c as usize].min(rep[f]);
        }
        rep = next;
    }
    let mut order: Vec<usize> = (0..coarsest.len()).collect();
    order.sort_by_key(|&c| rep[c]);

    let mut candidates = Vec::new();
    for k in 0..4u64 {
        let first = (seed.wrapping_add(k * 7919) % coarsest.len() as u64) as usize;
        candidates.push(region_growth(&coarsest, r, first));
    }
    candidates.push(index_blocks(&coarsest, r, &order));
    if let Some(a) = exhaustive(&coarsest, r, limit, 1 << 17) {
        candidates.push(a);
    }
    for a in candidates.iter_mut() {
        improve(&coarsest, a, r, limit);
        for lv in levels.iter().rev() {
            *a = lv.map.iter().map(|&c| a[c as usize]).collect();
            improve(&lv.g, a, r, limit);
        }
    }
    candidates
}

/// Independent multilevel cycles per call; matchings differ between cycles
/// and the best result over all of them is kept.
const CYCLES: u64 = 16;

pub fn partition_graph(g: &CellGraph, r: usize, opts: &PartitionOptions) -> Result<Partition> {
    let n = g.len();
    if r == 0 || r > n {
        return Err(Error::Partition(format!("{r} ranks for {n} cells")));
    }
    if r > u16::MAX as usize {
        return Err(Error::Partition(format!("{r} ranks exceed the rank id range")));
    }
    if r == 1 {
        return Ok(Partition::single(n));
    }
    let mut base = g.clone();
    if !(base.total_weight() > 0.0) || base.node_w.iter().any(|w| !(*w >= 0.0)) {
        base.node_w = vec![1.0; n];
    }
    let total = base.total_weight();
    let limit = (1.0 + opts.balance_tol) * total / r as f64;

    let mut candidates = Vec::new();
    for cycle in 0..CYCLES {
        let seed = opts.seed.wrapping_add(cycle.wrapping_mul(0x9E37_79B9));
        candidates.extend(multilevel(&base, r, limit, seed));
    }
    let mut a = vec![0u16; n];
    spectral_bisection(&base, (0..n).collect(), r, 0, &mut a);
    improve(&base, &mut a, r, limit);
    candidates.push(a);

    let mut best: Option<(bool, f64, f64, Vec<u16>)> = None;
    for a in candidates {
        let heaviest = part_weights(&base, &a, r).into_iter().fold(0.0, f64::max);
        let feasible = heaviest <= limit;
        let c = cut(&base, &a);
        let better = match &best {
            None => true,
            Some((bf, bc, bh, _)) => (feasible && !bf) || (feasible == *bf && (c < *bc || (c == *bc && heaviest < *bh))),
        };
        if better {
            best = Some((feasible, c, heaviest, a));
        }
    }
    Ok(Partition { assignment: best.unwrap().3, n_ranks: r })
}
