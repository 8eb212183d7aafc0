//! Activity marking: which cells hold particles due a kick, and which cells
//! must be drifted so those particles see up-to-date neighbours.

use alloc::vec;
use alloc::vec::Vec;

use crate::tree::build::{Tree, NO_CELL};
use crate::tree::interact::{enumerate_interactions, Interaction, Reach};

#[derive(Clone, Debug, Default)]
pub struct ActiveSets {
    pub active: Vec<bool>,
    pub drift: Vec<bool>,
    pub interactions: Vec<Interaction>,
}

/// Cells with a particle in bin <= `m`, the interactions they need, and the
/// cells those interactions read.
pub fn mark_active_cells(tree: &Tree, m: u32, reach: Reach) -> ActiveSets {
    let active = tree.cells.iter().map(|c| c.count > 0 && (c.min_bin as u32) <= m).collect();
    let interactions = enumerate_interactions(tree, m, reach);
    let drift = drift_required(tree, &interactions);
    ActiveSets { active, drift, interactions }
}

/// Cells appearing in any interaction, closed downward to their descendants,
/// plus every parent whose occupied children are all flagged.
pub fn drift_required(tree: &Tree, interactions: &[Interaction]) -> Vec<bool> {
    let n = tree.cells.len();
    let mut flag = vec![false; n];
    for it in interactions {
        flag[it.a as usize] = true;
        flag[it.b as usize] = true;
    }
    // children are stored after parents, so a forward pass closes downward
    for c in 0..n {
        let p = tree.cells[c].parent;
        if p != NO_CELL && flag[p as usize] {
            flag[c] = true;
        }
    }
    for c in (0..n).rev() {
        let cell = &tree.cells[c];
        if cell.is_split() && !flag[c] {
            let mut any = false;
            let mut all = true;
            for ch in cell.children() {
                if tree.cells[ch as usize].count > 0 {
                    any = true;
                    all &= flag[ch as usize];
                }
            }
            flag[c] = any && all;
        }
    }
    flag
}

/// Flagged, occupied cells whose parent is not flagged: one drift task each
/// covers every flagged particle exactly once.
pub fn maximal_cells(tree: &Tree, flag: &[bool]) -> Vec<u32> {
    (0..tree.cells.len() as u32)
        .filter(|&c| {
            let cell = &tree.cells[c as usize];
            flag[c as usize] && cell.count > 0 && (cell.parent == NO_CELL || !flag[cell.parent as usize])
        })
        .collect()
}
