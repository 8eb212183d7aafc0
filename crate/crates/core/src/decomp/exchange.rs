//! Plain-text exchange with external partitioners. A graph is written as
//!
//! ```text
//! graph <nodes> <edges>
//! node <id> <weight>
//! edge <u> <v> <weight>
//! ```
//!
//! and an assignment is read back as one rank per line, in node order.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::decomp::{CellGraph, Partition};
use crate::{Error, Result};

pub fn write_graph(g: &CellGraph) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "graph {} {}", g.len(), g.edges.len());
    for (i, w) in g.node_w.iter().enumerate() {
        let _ = writeln!(s, "node {i} {w:e}");
    }
    for &(u, v, w) in &g.edges {
        let _ = writeln!(s, "edge {u} {v} {w:e}");
    }
    s
}

fn bad(line: usize, what: &str) -> Error {
    Error::Wire(format!("line {line}: {what}"))
}

pub fn parse_graph(text: &str) -> Result<CellGraph> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let (ln, head) = lines.next().ok_or_else(|| bad(1, "empty graph file"))?;
    let f: Vec<&str> = head.split_whitespace().collect();
    if f.len() != 3 || f[0] != "graph" {
        return Err(bad(ln, "expected `graph <nodes> <edges>`"));
    }
    let n: usize = f[1].parse().map_err(|_| bad(ln, "node count"))?;
    let m: usize = f[2].parse().map_err(|_| bad(ln, "edge count"))?;
    let mut node_w = alloc::vec![f64::NAN; n];
    let mut edges = Vec::with_capacity(m);
    for (ln, l) in lines {
        let f: Vec<&str> = l.split_whitespace().collect();
        match (f.first().copied(), f.len()) {
            (Some("node"), 3) => {
                let i: usize = f[1].parse().map_err(|_| bad(ln, "node id"))?;
                let w: f64 = f[2].parse().map_err(|_| bad(ln, "node weight"))?;
                *node_w.get_mut(i).ok_or_else(|| bad(ln, "node id out of range"))? = w;
            }
            (Some("edge"), 4) => {
                let u: u32 = f[1].parse().map_err(|_| bad(ln, "edge end"))?;
                let v: u32 = f[2].parse().map_err(|_| bad(ln, "edge end"))?;
                let w: f64 = f[3].parse().map_err(|_| bad(ln, "edge weight"))?;
                if u as usize >= n || v as usize >= n {
                    return Err(bad(ln, "edge end out of range"));
                }
                edges.push((u, v, w));
            }
            _ => return Err(bad(ln, "expected a node or edge record")),
        }
    }
    if node_w.iter().any(|w| w.is_nan()) || edges.len() != m {
        return Err(Error::Wire(format!("graph file incomplete: want {n} nodes and {m} edges")));
    }
    Ok(CellGraph::from_edges(node_w, &edges))
}

pub fn write_assignment(p: &Partition) -> String {
    let mut s = String::new();
    for r in &p.assignment {
        let _ = writeln!(s, "{r}");
    }
    s
}

pub fn parse_assignment(text: &str, n_nodes: usize, n_ranks: usize) -> Result<Partition> {
    let mut assignment = Vec::with_capacity(n_nodes);
    for (i, l) in text.lines().enumerate() {
        let l = l.trim();
        if l.is_empty() {
            continue;
        }
        let r: usize = l.parse().map_err(|_| bad(i + 1, "rank id"))?;
        if r >= n_ranks {
            return Err(bad(i + 1, "rank id out of range"));
        }
        assignment.push(r as u16);
    }
    if assignment.len() != n_nodes {
        return Err(Error::Wire(format!("assignment has {} entries for {n_nodes} nodes", assignment.len())));
    }
    Ok(Partition { assignment, n_ranks })
}
