//! Construction of one rank's step graph from the interaction list, and the
//! merge of all ranks' graphs into a single executable graph.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::comm::{MsgSpec, Phase};
use crate::task::cost::CostModel;
use crate::task::graph::{Task, TaskGraph, TaskKind};
use crate::tree::{Interaction, Tree};
use crate::{Error, Result};

const NONE: u32 = u32::MAX;

/// Everything the builder needs about the current step, shared by all ranks.
pub struct StepInput<'a> {
    pub tree: &'a Tree,
    pub interactions: &'a [Interaction],
    /// Per cell: holds at least one active particle.
    pub active: &'a [bool],
    /// Cells to drift this step, disjoint subtrees, all ranks.
    pub drift_cells: &'a [u32],
    /// Per top-level cell: owning rank.
    pub owner: &'a [u16],
    pub messages: &'a [MsgSpec],
    pub costs: &'a CostModel,
}

impl StepInput<'_> {
    fn top(&self, c: u32) -> u32 {
        self.tree.cells[c as usize].top
    }

    fn owner_of(&self, c: u32) -> u16 {
        self.owner[self.top(c) as usize]
    }

    fn count(&self, c: u32) -> u32 {
        self.tree.cells[c as usize].count
    }
}

struct Builder<'a, 'b> {
    inp: &'b StepInput<'a>,
    rank: u16,
    g: TaskGraph,
    drift_of: Vec<u32>,
    sorts: BTreeMap<(u32, u8), u32>,
    ghost: BTreeMap<u32, u32>,
    /// (peer, top, phase) -> task, for sends and recvs respectively.
    sends: BTreeMap<(u16, u32, Phase), u32>,
    recvs: BTreeMap<(u16, u32, Phase), u32>,
}

impl Builder<'_, '_> {
    fn local(&self, c: u32) -> bool {
        self.inp.owner_of(c) == self.rank
    }

    fn add(&mut self, mut t: Task, locks: &[u32]) -> u32 {
        let mut l = locks.to_vec();
        l.sort_unstable();
        l.dedup();
        t.locks = l;
        t.rank = self.rank;
        t.cost_estimate = self.inp.costs.estimate(t.kind, t.na, t.nb);
        self.g.add(t)
    }

    fn drift_task(&self, c: u32) -> Result<u32> {
        match self.drift_of[c as usize] {
            NONE => Err(Error::Domain("interaction cell not covered by a drift task")),
            d => Ok(d),
        }
    }

    /// Task after which the particle data of cell `c` is in place for a sort
    /// or a self sweep on this rank.
    fn upstream(&self, c: u32) -> Result<u32> {
        if self.local(c) {
            self.drift_task(c)
        } else {
            let key = (self.inp.owner_of(c), self.inp.top(c), Phase::Positions);
            self.recvs.get(&key).copied().ok_or_else(|| Error::Comm(format!("no position message for cell {c}")))
        }
    }

    fn sort(&mut self, c: u32, dir: u8) -> Result<u32> {
        if let Some(&t) = self.sorts.get(&(c, dir)) {
            return Ok(t);
        }
        let up = self.upstream(c)?;
        let mut t = Task::new(TaskKind::Sort, c);
        t.dir = dir;
        t.na = self.inp.count(c);
        let id = self.add(t, &[c]);
        self.g.depend(up, id);
        self.sorts.insert((c, dir), id);
        Ok(id)
    }

    /// Local active sides of an interaction: the cells it writes on this rank.
    fn writes(&self, it: &Interaction) -> Vec<u32> {
        let mut w = Vec::new();
        for c in [it.a, it.b] {
            if self.local(c) && self.inp.active[c as usize] && !w.contains(&c) {
                w.push(c);
            }
        }
        w
    }
}

fn descendants(tree: &Tree, c: u32, out: &mut Vec<u32>) {
    out.push(c);
    let cell = &tree.cells[c as usize];
    if cell.is_split() {
        for ch in cell.children() {
            descendants(tree, ch, out);
        }
    }
}

/// Tasks of rank `rank` for one step. Pairs with a foreign cell read its
/// proxy, which is filled by recv tasks; only local active cells are written.
pub fn build_graph(inp: &StepInput, rank: u16) -> Result<TaskGraph> {
    let tree = inp.tree;
    let mut b = Builder {
        inp,
        rank,
        g: TaskGraph::default(),
        drift_of: vec![NONE; tree.cells.len()],
        sorts: BTreeMap::new(),
        ghost: BTreeMap::new(),
        sends: BTreeMap::new(),
        recvs: BTreeMap::new(),
    };

    // drifts
    let mut sub = Vec::new();
    for &c in inp.drift_cells {
        if !b.local(c) || inp.count(c) == 0 {
            continue;
        }
        let mut t = Task::new(TaskKind::Drift, c);
        t.na = inp.count(c);
        let id = b.add(t, &[c]);
        sub.clear();
        descendants(tree, c, &mut sub);
        for &d in &sub {
            b.drift_of[d as usize] = id;
        }
    }

    // communication endpoints
    for m in inp.messages {
        for phase in Phase::BOTH {
            if m.src == rank {
                let mut t = Task::new(TaskKind::Send, m.top);
                t.peer = m.dest;
                t.phase = phase;
                t.na = m.count;
                let id = b.add(t, &[m.top]);
                b.sends.insert((m.dest, m.top, phase), id);
            } else if m.dest == rank {
                let mut t = Task::new(TaskKind::Recv, m.top);
                t.peer = m.src;
                t.phase = phase;
                t.na = m.count;
                let id = b.add(t, &[m.top]);
                b.recvs.insert((m.src, m.top, phase), id);
            }
        }
        if m.src == rank {
            let (sp, sd) = (b.sends[&(m.dest, m.top, Phase::Positions)], b.sends[&(m.dest, m.top, Phase::Density)]);
            let mut ups: Vec<u32> = Vec::new();
            for &c in &m.cells {
                let d = b.drift_task(c)?;
                if !ups.contains(&d) {
                    ups.push(d);
                }
            }
            for d in ups {
                b.g.depend(d, sp);
            }
            b.g.depend(sp, sd);
        } else if m.dest == rank {
            let (rp, rd) = (b.recvs[&(m.src, m.top, Phase::Positions)], b.recvs[&(m.src, m.top, Phase::Density)]);
            b.g.depend(rp, rd);
        }
    }

    // density sweeps
    let included: Vec<&Interaction> = inp.interactions.iter().filter(|it| !b.writes(it).is_empty()).collect();
    let mut density_writers: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    let mut proxy_readers: BTreeMap<(u16, u32), Vec<u32>> = BTreeMap::new();
    for it in &included {
        let id = if it.is_self() {
            let mut t = Task::new(TaskKind::DensitySelf, it.a);
            t.na = inp.count(it.a);
            t.reach = it.reach;
            let id = b.add(t, &[it.a]);
            let up = b.upstream(it.a)?;
            b.g.depend(up, id);
            id
        } else {
            let sa = b.sort(it.a, it.dir)?;
            let sb = b.sort(it.b, it.dir)?;
            let mut t = Task::pair(TaskKind::DensityPair, it.a, it.b);
            t.shift = it.shift;
            t.dir = it.dir;
            t.reach = it.reach;
            t.na = inp.count(it.a);
            t.nb = inp.count(it.b);
            let id = b.add(t, &[it.a, it.b]);
            b.g.depend(sa, id);
            if sb != sa {
                b.g.depend(sb, id);
            }
            id
        };
        for c in b.writes(it) {
            let list = density_writers.entry(inp.top(c)).or_default();
            if list.last() != Some(&id) {
                list.push(id);
            }
        }
        for c in [it.a, it.b] {
            if !b.local(c) {
                let list = proxy_readers.entry((inp.owner_of(c), inp.top(c))).or_default();
                if list.last() != Some(&id) {
                    list.push(id);
                }
            }
        }
    }

    // ghosts, one per local top holding active particles
    for (&top, writers) in &density_writers {
        let mut t = Task::new(TaskKind::Ghost, top);
        t.na = inp.count(top);
        let id = b.add(t, &[top]);
        for &w in writers {
            b.g.depend(w, id);
        }
        b.ghost.insert(top, id);
    }
    for m in inp.messages {
        if m.src == rank {
            if let Some(&gh) = b.ghost.get(&m.top) {
                b.g.depend(gh, b.sends[&(m.dest, m.top, Phase::Density)]);
            }
        }
    }
    for (key, readers) in &proxy_readers {
        let rd = b.recvs[&(key.0, key.1, Phase::Density)];
        for &r in readers {
            b.g.depend(r, rd);
        }
    }

    // force sweeps
    let mut force_writers: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for it in &included {
        let id = if it.is_self() {
            let mut t = Task::new(TaskKind::ForceSelf, it.a);
            t.na = inp.count(it.a);
            t.reach = it.reach;
            b.add(t, &[it.a])
        } else {
            let mut t = Task::pair(TaskKind::ForcePair, it.a, it.b);
            t.shift = it.shift;
            t.dir = it.dir;
            t.reach = it.reach;
            t.na = inp.count(it.a);
            t.nb = inp.count(it.b);
            b.add(t, &[it.a, it.b])
        };
        let mut ups: Vec<u32> = Vec::new();
        for c in [it.a, it.b] {
            let top = inp.top(c);
            let up = if b.local(c) {
                b.ghost.get(&top).copied()
            } else {
                let key = (inp.owner_of(c), top, Phase::Density);
                Some(*b.recvs.get(&key).ok_or_else(|| Error::Comm(format!("no density message for cell {c}")))?)
            };
            if let Some(u) = up {
                if !ups.contains(&u) {
                    ups.push(u);
                }
            }
        }
        for u in ups {
            b.g.depend(u, id);
        }
        for c in b.writes(it) {
            let list = force_writers.entry(inp.top(c)).or_default();
            if list.last() != Some(&id) {
                list.push(id);
            }
        }
    }

    // kicks, after every writer and every outgoing message of the top
    let tops: Vec<(u32, u32)> = b.ghost.iter().map(|(&t, &g)| (t, g)).collect();
    for (top, gh) in tops {
        let mut t = Task::new(TaskKind::Kick, top);
        t.na = inp.count(top);
        let id = b.add(t, &[top]);
        b.g.depend(gh, id);
        if let Some(ws) = force_writers.get(&top) {
            for &w in ws {
                b.g.depend(w, id);
            }
        }
        let outgoing: Vec<u32> = b.sends.iter().filter(|(k, _)| k.1 == top).map(|(_, &s)| s).collect();
        for s in outgoing {
            b.g.depend(s, id);
        }
    }
    Ok(b.g)
}

/// Concatenate per-rank graphs into one. Lock ids become
/// `rank * n_cells + cell`; every send is linked to its matching recv by a
/// dependency edge and `partner`.
pub fn merge_ranks(graphs: Vec<TaskGraph>, n_cells: usize) -> Result<TaskGraph> {
    let mut out = TaskGraph::default();
    let mut sends: BTreeMap<(u16, u16, u32, Phase), u32> = BTreeMap::new();
    let mut recvs: BTreeMap<(u16, u16, u32, Phase), u32> = BTreeMap::new();
    for g in graphs {
        let base = out.tasks.len() as u32;
        for mut t in g.tasks {
            let off = t.rank as u32 * n_cells as u32;
            for l in &mut t.locks {
                *l += off;
            }
            for u in &mut t.unlocks {
                *u += base;
            }
            let id = out.tasks.len() as u32;
            match t.kind {
                TaskKind::Send => {
                    sends.insert((t.rank, t.peer, t.ci, t.phase), id);
                }
                TaskKind::Recv => {
                    recvs.insert((t.peer, t.rank, t.ci, t.phase), id);
                }
                _ => {}
            }
            out.tasks.push(t);
        }
    }
    if sends.len() != recvs.len() {
        return Err(Error::Comm(format!("asymmetric exchange: {} sends, {} recvs", sends.len(), recvs.len())));
    }
    for (key, s) in sends {
        let r = recvs
            .get(&key)
            .copied()
            .ok_or_else(|| Error::Comm(format!("asymmetric exchange: send {key:?} has no recv")))?;
        out.depend(s, r);
        out.tasks[s as usize].partner = r;
    }
    out.check_acyclic()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comm::plan_messages;
    use crate::task::locks::LockTable;
    use crate::tree::build::tests::random_positions;
    use crate::tree::{drift_required, enumerate_interactions, maximal_cells, Reach, TreeParams, NO_CELL};
    use crate::vec3::Vec3;

    struct Setup {
        tree: Tree,
        list: Vec<Interaction>,
        active: Vec<bool>,
        drift: Vec<u32>,
    }

    fn setup(pos: &[Vec3], dims: [usize; 3], h: f64, bins: impl Fn(usize) -> u8, m: u32) -> Setup {
        let params = TreeParams { top_dims: dims, split_threshold: 30, max_depth: 10 };
        let (mut tree, perm) = Tree::build(pos, Vec3::splat(1.0), params).unwrap();
        tree.refresh_all(|i| (h, bins(perm[i] as usize), 0.0));
        let list = enumerate_interactions(&tree, m, Reach::EXACT);
        let active: Vec<bool> = tree.cells.iter().map(|c| c.count > 0 && c.min_bin as u32 <= m).collect();
        let flags = drift_required(&tree, &list);
        let drift = maximal_cells(&tree, &flags);
        Setup { tree, list, active, drift }
    }

    fn graph_for(s: &Setup, owner: &[u16], ranks: u16) -> (Vec<TaskGraph>, Vec<MsgSpec>) {
        let msgs = plan_messages(&s.tree, &s.list, &s.active, owner);
        let costs = CostModel::default();
        let inp = StepInput {
            tree: &s.tree,
            interactions: &s.list,
            active: &s.active,
            drift_cells: &s.drift,
            owner,
            messages: &msgs,
            costs: &costs,
        };
        ((0..ranks).map(|r| build_graph(&inp, r).unwrap()).collect(), msgs)
    }

    fn kinds(g: &TaskGraph) -> Vec<TaskKind> {
        let mut k: Vec<TaskKind> = g.tasks.iter().map(|t| t.kind).collect();
        k.sort();
        k
    }

    fn reaches(g: &TaskGraph, from: u32, to: u32) -> bool {
        let mut stack = vec![from];
        let mut seen = vec![false; g.len()];
        while let Some(x) = stack.pop() {
            if x == to {
                return true;
            }
            if !seen[x as usize] {
                seen[x as usize] = true;
                stack.extend(&g.tasks[x as usize].unlocks);
            }
        }
        false
    }

    #[test]
    fn isolated_leaf_gives_minimal_chain() {
        let pos: Vec<Vec3> = (0..10).map(|i| Vec3::new(0.5 + 0.001 * i as f64, 0.5, 0.5)).collect();
        let s = setup(&pos, [3, 3, 3], 0.01, |_| 0, u32::MAX);
        let (gs, msgs) = graph_for(&s, &[0; 27], 1);
        assert!(msgs.is_empty());
        let g = &gs[0];
        use TaskKind::*;
        assert_eq!(kinds(g), [DensitySelf, Ghost, ForceSelf, Kick, Drift]);
        let id = |k| g.tasks.iter().position(|t| t.kind == k).unwrap() as u32;
        let chain = [id(Drift), id(DensitySelf), id(Ghost), id(ForceSelf), id(Kick)];
        for w in chain.windows(2) {
            assert!(g.tasks[w[0] as usize].unlocks.contains(&w[1]));
        }
        g.check_acyclic().unwrap();
    }

    #[test]
    fn nothing_active_gives_empty_graph() {
        let pos = random_positions(500, Vec3::splat(1.0), 3);
        let s = setup(&pos, [4, 4, 4], 0.05, |_| 5, 2);
        let (gs, _) = graph_for(&s, &[0; 64], 1);
        assert!(gs[0].is_empty());
    }

    #[test]
    fn adjacent_leaves_conflict_without_ordering() {
        // two touching leaves in neighbouring top cells
        let mut pos = Vec::new();
        for i in 0..5 {
            pos.push(Vec3::new(0.47 + 0.005 * i as f64, 0.3, 0.3));
            pos.push(Vec3::new(0.51 + 0.005 * i as f64, 0.3, 0.3));
        }
        let s = setup(&pos, [4, 4, 4], 0.02, |_| 0, u32::MAX);
        let (gs, _) = graph_for(&s, &[0; 64], 1);
        let g = &gs[0];
        let dens: Vec<u32> = (0..g.len() as u32).filter(|&i| g.tasks[i as usize].kind.name().starts_with("density")).collect();
        assert_eq!(dens.len(), 3);
        let parents: Vec<u32> = s.tree.cells.iter().map(|c| c.parent).collect();
        let locks = LockTable::new(parents);
        let pair = *dens.iter().find(|&&i| g.tasks[i as usize].kind == TaskKind::DensityPair).unwrap();
        for &d in &dens {
            if d != pair {
                assert!(locks.conflict(&g.tasks[d as usize].locks, &g.tasks[pair as usize].locks));
                assert!(!reaches(g, d, pair) && !reaches(g, pair, d));
            }
        }
    }

    #[test]
    fn flow_invariants_hold() {
        let pos = random_positions(3000, Vec3::splat(1.0), 11);
        let s = setup(&pos, [4, 4, 4], 0.04, |i| (i % 3) as u8, 0);
        let (gs, _) = graph_for(&s, &[0; 64], 1);
        let g = &gs[0];
        g.check_acyclic().unwrap();
        let of = |k: TaskKind| (0..g.len() as u32).filter(move |&i| g.tasks[i as usize].kind == k);
        for d in of(TaskKind::DensityPair).chain(of(TaskKind::DensitySelf)) {
            let t = &g.tasks[d as usize];
            for c in [t.ci, t.cj] {
                if c == NO_CELL || !s.active[c as usize] {
                    continue;
                }
                let top = s.tree.cells[c as usize].top;
                let gh = of(TaskKind::Ghost).find(|&x| g.tasks[x as usize].ci == top).unwrap();
                assert!(reaches(g, d, gh));
            }
        }
        for f in of(TaskKind::ForcePair).chain(of(TaskKind::ForceSelf)) {
            let t = &g.tasks[f as usize];
            for c in [t.ci, t.cj] {
                if c == NO_CELL || !s.active[c as usize] {
                    continue;
                }
                let top = s.tree.cells[c as usize].top;
                let gh = of(TaskKind::Ghost).find(|&x| g.tasks[x as usize].ci == top).unwrap();
                let k = of(TaskKind::Kick).find(|&x| g.tasks[x as usize].ci == top).unwrap();
                assert!(reaches(g, gh, f));
                assert!(reaches(g, f, k));
            }
        }
    }

    #[test]
    fn cross_rank_pair_exchanges_two_phases_each_way() {
        let mut pos = Vec::new();
        for i in 0..5 {
            pos.push(Vec3::new(0.47 + 0.005 * i as f64, 0.3, 0.3));
            pos.push(Vec3::new(0.51 + 0.005 * i as f64, 0.3, 0.3));
        }
        let s = setup(&pos, [4, 4, 4], 0.02, |_| 0, u32::MAX);
        let owner: Vec<u16> = (0..64).map(|t| if t % 4 >= 2 { 1 } else { 0 }).collect();
        let (gs, _) = graph_for(&s, &owner, 2);
        for g in &gs {
            let n = |k| g.tasks.iter().filter(|t| t.kind == k).count();
            assert_eq!((n(TaskKind::Send), n(TaskKind::Recv)), (2, 2));
        }
        let merged = merge_ranks(gs, s.tree.cells.len()).unwrap();
        for t in &merged.tasks {
            if t.kind == TaskKind::Send {
                let r = &merged.tasks[t.partner as usize];
                assert_eq!((r.kind, r.rank, r.peer, r.ci, r.phase), (TaskKind::Recv, t.peer, t.rank, t.ci, t.phase));
            }
        }
    }

    #[test]
    fn inactive_foreign_cell_exchanges_nothing() {
        let mut pos = Vec::new();
        for i in 0..5 {
            pos.push(Vec3::new(0.47 + 0.005 * i as f64, 0.3, 0.3));
            pos.push(Vec3::new(0.51 + 0.005 * i as f64, 0.3, 0.3));
        }
        // right-hand particles are in bin 4, inactive at m = 0
        let s = setup(&pos, [4, 4, 4], 0.02, |i| if i % 2 == 1 { 4 } else { 0 }, 0);
        let owner: Vec<u16> = (0..64).map(|t| if t % 4 >= 2 { 1 } else { 0 }).collect();
        let (gs, msgs) = graph_for(&s, &owner, 2);
        // rank 1 only ships its cell to rank 0, never the reverse
        assert_eq!(msgs.len(), 1);
        assert_eq!((msgs[0].src, msgs[0].dest), (1, 0));
        assert!(gs[1].tasks.iter().all(|t| t.kind != TaskKind::Recv));
        merge_ranks(gs, s.tree.cells.len()).unwrap();
    }

    #[test]
    fn unmatched_send_is_rejected() {
        let mut g = TaskGraph::default();
        let mut t = Task::new(TaskKind::Send, 3);
        t.peer = 1;
        g.add(t);
        assert!(matches!(merge_ranks(vec![g, TaskGraph::default()], 8), Err(Error::Comm(_))));
    }
}
