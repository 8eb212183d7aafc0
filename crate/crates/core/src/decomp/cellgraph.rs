use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::task::{CostModel, TaskKind};
use crate::tree::{Interaction, Tree, EMPTY_BIN};

/// Node and edge weighting schemes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Unit nodes, unit edges.
    NoneNone,
    /// Task costs on nodes and edges.
    CostsCosts,
    /// Unit nodes, task costs on edges.
    NoneCosts,
    /// Task costs on nodes, urgency of the next update on edges.
    CostsTime,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::NoneNone, Strategy::CostsCosts, Strategy::NoneCosts, Strategy::CostsTime];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::NoneNone => "none_none",
            Strategy::CostsCosts => "costs_costs",
            Strategy::NoneCosts => "none_costs",
            Strategy::CostsTime => "costs_time",
        }
    }

    pub fn parse(s: &str) -> Option<Strategy> {
        Strategy::ALL.into_iter().find(|x| x.name() == s)
    }
}

/// Undirected weighted graph over top-level cells; `edges` holds each pair
/// once with `u < v`, `adj` both directions.
#[derive(Clone, Debug, PartialEq)]
pub struct CellGraph {
    pub node_w: Vec<f64>,
    pub edges: Vec<(u32, u32, f64)>,
    pub adj: Vec<Vec<(u32, f64)>>,
}

impl CellGraph {
    /// Parallel edges are merged by summing their weights; self loops dropped.
    pub fn from_edges(node_w: Vec<f64>, edges: &[(u32, u32, f64)]) -> Self {
        let mut m: BTreeMap<(u32, u32), f64> = BTreeMap::new();
        for &(u, v, w) in edges {
            if u != v {
                *m.entry((u.min(v), u.max(v))).or_insert(0.0) += w;
            }
        }
        let mut adj = vec![Vec::new(); node_w.len()];
        let edges: Vec<(u32, u32, f64)> = m.into_iter().map(|((u, v), w)| (u, v, w)).collect();
        for &(u, v, w) in &edges {
            adj[u as usize].push((v, w));
            adj[v as usize].push((u, w));
        }
        CellGraph { node_w, edges, adj }
    }

    pub fn len(&self) -> usize {
        self.node_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_w.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.node_w.iter().sum()
    }
}

/// Estimated work of a full (all-active) step, per top-level cell, and the
/// cost of pair work crossing each pair of distinct top-level cells.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CellLoads {
    pub node_cost: Vec<f64>,
    pub edge_cost: BTreeMap<(u32, u32), f64>,
}

/// Pair work between two top cells is split evenly between them; unary work
/// (drift, ghost, kick) goes to the cell itself.
pub fn cell_loads(tree: &Tree, all_active: &[Interaction], costs: &CostModel) -> CellLoads {
    let n = tree.n_top();
    let mut node_cost = vec![0.0; n];
    let mut edge_cost = BTreeMap::new();
    for t in 0..n {
        let c = tree.cells[t].count;
        node_cost[t] = [TaskKind::Drift, TaskKind::Ghost, TaskKind::Kick].iter().map(|&k| costs.estimate(k, c, 0)).sum();
    }
    for it in all_active {
        let (ca, cb) = (&tree.cells[it.a as usize], &tree.cells[it.b as usize]);
        let (ta, tb) = (ca.top as usize, cb.top as usize);
        let w = if it.is_self() {
            costs.estimate(TaskKind::DensitySelf, ca.count, 0) + costs.estimate(TaskKind::ForceSelf, ca.count, 0)
        } else {
            costs.estimate(TaskKind::DensityPair, ca.count, cb.count) + costs.estimate(TaskKind::ForcePair, ca.count, cb.count)
        };
        if ta == tb {
            node_cost[ta] += w;
        } else {
            node_cost[ta] += 0.5 * w;
            node_cost[tb] += 0.5 * w;
            *edge_cost.entry((ta.min(tb) as u32, ta.max(tb) as u32)).or_insert(0.0) += w;
        }
    }
    CellLoads { node_cost, edge_cost }
}

/// Ticks from `tick` until a cell whose smallest bin is `min_bin` is next
/// active; empty cells count as never active before `end_tick`.
pub fn ticks_to_active(min_bin: u8, tick: u64, end_tick: u64) -> u64 {
    if min_bin == EMPTY_BIN || min_bin >= 63 {
        return end_tick.saturating_sub(tick);
    }
    let p = 1u64 << min_bin;
    let next = tick.div_ceil(p) * p;
    next.min(end_tick).saturating_sub(tick)
}

/// Weighted cell graph. Under `CostsTime` an edge weighs `K / max(1, d)`
/// with `K = 2^n_bin` and `d` the ticks until the sooner of its two cells is
/// next active, so cutting next to soon-active cells is expensive.
pub fn build_cell_graph(loads: &CellLoads, ticks_to: &[u64], n_bin: u32, strategy: Strategy) -> CellGraph {
    let unit_nodes = matches!(strategy, Strategy::NoneNone | Strategy::NoneCosts);
    let node_w = if unit_nodes { vec![1.0; loads.node_cost.len()] } else { loads.node_cost.clone() };
    let k = libm::ldexp(1.0, n_bin as i32);
    let edges: Vec<(u32, u32, f64)> = loads
        .edge_cost
        .iter()
        .map(|(&(u, v), &c)| {
            let w = match strategy {
                Strategy::NoneNone => 1.0,
                Strategy::CostsCosts | Strategy::NoneCosts => c,
                Strategy::CostsTime => {
                    let d = ticks_to[u as usize].min(ticks_to[v as usize]).max(1);
                    k / d as f64
                }
            };
            (u, v, w)
        })
        .collect();
    CellGraph::from_edges(node_w, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::Strategy;
    use proptest::prelude::{prop_assert, proptest};

    fn loads() -> CellLoads {
        let mut edge_cost = BTreeMap::new();
        edge_cost.insert((0, 1), 7.0);
        edge_cost.insert((1, 2), 3.0);
        CellLoads { node_cost: vec![5.0, 6.0, 9.0], edge_cost }
    }

    #[test]
    fn none_none_is_all_ones() {
        let g = build_cell_graph(&loads(), &[0, 0, 0], 10, Strategy::NoneNone);
        assert!(g.node_w.iter().all(|&w| w == 1.0));
        assert!(g.edges.iter().all(|e| e.2 == 1.0));
    }

    #[test]
    fn cost_strategies() {
        let g = build_cell_graph(&loads(), &[0, 0, 0], 10, Strategy::CostsCosts);
        assert_eq!(g.node_w, [5.0, 6.0, 9.0]);
        assert_eq!(g.edges, [(0, 1, 7.0), (1, 2, 3.0)]);
        let g = build_cell_graph(&loads(), &[0, 0, 0], 10, Strategy::NoneCosts);
        assert_eq!(g.node_w, [1.0; 3]);
        assert_eq!(g.edges[0].2, 7.0);
    }

    #[test]
    fn time_weights_span_k_to_one() {
        let n_bin = 10;
        let end = 1u64 << n_bin;
        // cell 0 active now, cells 1 and 2 idle until the final tick
        let t = [0, end, end];
        let g = build_cell_graph(&loads(), &t, n_bin, Strategy::CostsTime);
        assert_eq!(g.edges, [(0, 1, 1024.0), (1, 2, 1.0)]);
        assert_eq!(g.node_w, [5.0, 6.0, 9.0]);
    }

    #[test]
    fn ticks_to_active_examples() {
        assert_eq!(ticks_to_active(3, 16, 1024), 0);
        assert_eq!(ticks_to_active(3, 17, 1024), 7);
        assert_eq!(ticks_to_active(0, 5, 1024), 0);
        assert_eq!(ticks_to_active(EMPTY_BIN, 5, 1024), 1019);
        assert_eq!(ticks_to_active(10, 0, 1024), 0);
        assert_eq!(ticks_to_active(10, 1, 1024), 1023);
    }

    proptest! {
        #[test]
        fn urgency_is_monotone(a in 0u64..2000, b in 0u64..2000, d in 0u64..2000) {
            let sooner = a.saturating_sub(d);
            let w0 = build_cell_graph(&loads(), &[a, b, b], 11, Strategy::CostsTime);
            let w1 = build_cell_graph(&loads(), &[sooner, b, b], 11, Strategy::CostsTime);
            prop_assert!(w1.edges[0].2 >= w0.edges[0].2);
        }
    }
}
