use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::tree::{Interaction, Tree};

/// The two exchanges of a step: drifted positions before the density sweep,
/// and density results before the force sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Positions = 0,
    Density = 1,
}

impl Phase {
    pub const BOTH: [Phase; 2] = [Phase::Positions, Phase::Density];

    pub fn from_u32(v: u32) -> Option<Phase> {
        match v {
            0 => Some(Phase::Positions),
            1 => Some(Phase::Density),
            _ => None,
        }
    }

    /// Payload bytes per particle record.
    pub fn record_bytes(self) -> usize {
        match self {
            Phase::Positions => 64,
            Phase::Density => 32,
        }
    }
}

/// Data rank `src` must ship to rank `dest` about its top-level cell `top`
/// this step: the particles of `cells` (disjoint subtrees of `top`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MsgSpec {
    pub src: u16,
    pub dest: u16,
    pub top: u32,
    pub cells: Vec<u32>,
    pub count: u32,
}

/// Rank `owner(x)` sends cell `x` to `owner(y)` whenever an interaction pairs
/// `x` with a foreign cell `y` that is active: the receiver needs `x` to
/// update `y`. Inactive receivers get nothing.
pub fn plan_messages(tree: &Tree, interactions: &[Interaction], active: &[bool], owner: &[u16]) -> Vec<MsgSpec> {
    let own = |c: u32| owner[tree.cells[c as usize].top as usize];
    let mut need: BTreeMap<(u16, u16, u32), BTreeSet<u32>> = BTreeMap::new();
    for it in interactions {
        for (x, y) in [(it.a, it.b), (it.b, it.a)] {
            let (ox, oy) = (own(x), own(y));
            if ox != oy && active[y as usize] {
                need.entry((ox, oy, tree.cells[x as usize].top)).or_default().insert(x);
            }
        }
    }
    need.into_iter()
        .map(|((src, dest, top), set)| {
            let cells: Vec<u32> = set
                .iter()
                .copied()
                .filter(|&c| {
                    let mut p = tree.cells[c as usize].parent;
                    while p != crate::tree::NO_CELL {
                        if set.contains(&p) {
                            return false;
                        }
                        p = tree.cells[p as usize].parent;
                    }
                    true
                })
                .collect();
            let count = cells.iter().map(|&c| tree.cells[c as usize].count).sum();
            MsgSpec { src, dest, top, cells, count }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::build::tests::random_positions;
    use crate::tree::{enumerate_interactions, Reach, TreeParams};
    use crate::vec3::Vec3;
    use alloc::vec;

    fn tree(n: usize) -> Tree {
        let pos = random_positions(n, Vec3::splat(1.0), 5);
        let params = TreeParams { top_dims: [4, 4, 4], split_threshold: 40, max_depth: 10 };
        let (mut t, _) = Tree::build(&pos, Vec3::splat(1.0), params).unwrap();
        t.refresh_all(|i| (0.04, (i % 4) as u8, 0.0));
        t
    }

    #[test]
    fn single_rank_sends_nothing() {
        let t = tree(3000);
        let list = enumerate_interactions(&t, u32::MAX, Reach::EXACT);
        let active = vec![true; t.cells.len()];
        assert!(plan_messages(&t, &list, &active, &vec![0; 64]).is_empty());
    }

    #[test]
    fn inactive_receiver_gets_nothing() {
        let t = tree(3000);
        let owner: Vec<u16> = (0..64).map(|c| (c % 2) as u16).collect();
        let list = enumerate_interactions(&t, u32::MAX, Reach::EXACT);
        let all = vec![true; t.cells.len()];
        let full = plan_messages(&t, &list, &all, &owner);
        assert!(!full.is_empty());
        // rank 1 has nothing active: rank 1 receives nothing, rank 0 still does
        let active: Vec<bool> = t.cells.iter().map(|c| owner[c.top as usize] == 0).collect();
        let part = plan_messages(&t, &list, &active, &owner);
        assert!(part.iter().all(|m| m.dest == 0));
        assert!(!part.is_empty());
    }

    #[test]
    fn message_cells_are_disjoint_subtrees() {
        let t = tree(6000);
        let owner: Vec<u16> = (0..64).map(|c| (c / 16) as u16).collect();
        let list = enumerate_interactions(&t, u32::MAX, Reach::EXACT);
        let active = vec![true; t.cells.len()];
        for m in plan_messages(&t, &list, &active, &owner) {
            for &a in &m.cells {
                assert_eq!(t.cells[a as usize].top, m.top);
                for &b in &m.cells {
                    if a != b {
                        assert!(!t.is_ancestor(a, b));
                    }
                }
            }
            assert_ne!(m.src, m.dest);
        }
    }
}
