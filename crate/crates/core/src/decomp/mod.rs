//! Domain decomposition of the top-level cell grid over ranks: the weighted
//! cell graph, a slab grid baseline, a multilevel graph partitioner and
//! partition quality metrics.

pub mod cellgraph;
pub mod exchange;
pub mod grid;
pub mod multilevel;

pub use cellgraph::{build_cell_graph, cell_loads, ticks_to_active, CellGraph, CellLoads, Strategy};
pub use exchange::{parse_assignment, parse_graph, write_assignment, write_graph};
pub use grid::partition_grid;
pub use multilevel::{partition_graph, PartitionOptions};

use alloc::vec;
use alloc::vec::Vec;

/// Assignment of every top-level cell to a rank in `0..n_ranks`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub assignment: Vec<u16>,
    pub n_ranks: usize,
}

impl Partition {
    pub fn single(n: usize) -> Self {
        Partition { assignment: vec![0; n], n_ranks: 1 }
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_ranks];
        for &r in &self.assignment {
            c[r as usize] += 1;
        }
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quality {
    pub imbalance: f64,
    pub edge_cut: f64,
    pub max_rank_weight: f64,
}

pub fn rank_weights(g: &CellGraph, p: &Partition) -> Vec<f64> {
    let mut w = vec![0.0; p.n_ranks];
    for (i, &r) in p.assignment.iter().enumerate() {
        w[r as usize] += g.node_w[i];
    }
    w
}

pub fn edge_cut(g: &CellGraph, p: &Partition) -> f64 {
    g.edges.iter().filter(|e| p.assignment[e.0 as usize] != p.assignment[e.1 as usize]).map(|e| e.2).sum()
}

/// Imbalance is the heaviest rank over the mean rank weight, minus one.
pub fn evaluate_partition(g: &CellGraph, p: &Partition) -> Quality {
    let w = rank_weights(g, p);
    let total: f64 = w.iter().sum();
    let max = w.iter().cloned().fold(0.0, f64::max);
    let mean = total / p.n_ranks as f64;
    let imbalance = if mean > 0.0 { max / mean - 1.0 } else { 0.0 };
    Quality { imbalance, edge_cut: edge_cut(g, p), max_rank_weight: max }
}
