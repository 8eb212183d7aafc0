use alloc::vec;
use alloc::vec::Vec;

use crate::comm::Phase;
use crate::tree::NO_CELL;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TaskKind {
    Sort,
    DensitySelf,
    DensityPair,
    Ghost,
    ForceSelf,
    ForcePair,
    Kick,
    Drift,
    Send,
    Recv,
}

impl TaskKind {
    pub const ALL: [TaskKind; 10] = [
        TaskKind::Sort,
        TaskKind::DensitySelf,
        TaskKind::DensityPair,
        TaskKind::Ghost,
        TaskKind::ForceSelf,
        TaskKind::ForcePair,
        TaskKind::Kick,
        TaskKind::Drift,
        TaskKind::Send,
        TaskKind::Recv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Sort => "sort",
            TaskKind::DensitySelf => "density_self",
            TaskKind::DensityPair => "density_pair",
            TaskKind::Ghost => "ghost",
            TaskKind::ForceSelf => "force_self",
            TaskKind::ForcePair => "force_pair",
            TaskKind::Kick => "kick",
            TaskKind::Drift => "drift",
            TaskKind::Send => "send",
            TaskKind::Recv => "recv",
        }
    }

    pub fn is_pair(self) -> bool {
        matches!(self, TaskKind::DensityPair | TaskKind::ForcePair)
    }

    pub fn is_self(self) -> bool {
        matches!(self, TaskKind::DensitySelf | TaskKind::ForceSelf)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub kind: TaskKind,
    pub ci: u32,
    /// Second cell of pair tasks, else `NO_CELL`.
    pub cj: u32,
    pub shift: [i8; 3],
    /// Sort direction for sort and pair tasks.
    pub dir: u8,
    pub reach: f64,
    pub rank: u16,
    /// Other end of send/recv tasks.
    pub peer: u16,
    pub phase: Phase,
    pub locks: Vec<u32>,
    pub unlocks: Vec<u32>,
    /// Number of unresolved dependencies before execution starts.
    pub wait: u32,
    pub cost_estimate: f64,
    /// Particle counts feeding the cost model (second is 0 for unary tasks).
    pub na: u32,
    pub nb: u32,
    /// Matching recv of a send task, once ranks are merged.
    pub partner: u32,
}

impl Task {
    pub fn new(kind: TaskKind, ci: u32) -> Self {
        Task {
            kind,
            ci,
            cj: NO_CELL,
            shift: [0; 3],
            dir: 0,
            reach: 0.0,
            rank: 0,
            peer: 0,
            phase: Phase::Positions,
            locks: Vec::new(),
            unlocks: Vec::new(),
            wait: 0,
            cost_estimate: 0.0,
            na: 0,
            nb: 0,
            partner: u32::MAX,
        }
    }

    pub fn pair(kind: TaskKind, ci: u32, cj: u32) -> Self {
        Task { cj, ..Task::new(kind, ci) }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TaskGraph {
    pub tasks: Vec<Task>,
}

impl TaskGraph {
    pub fn add(&mut self, t: Task) -> u32 {
        self.tasks.push(t);
        (self.tasks.len() - 1) as u32
    }

    /// `before` must finish before `after` starts.
    pub fn depend(&mut self, before: u32, after: u32) {
        debug_assert_ne!(before, after);
        self.tasks[before as usize].unlocks.push(after);
        self.tasks[after as usize].wait += 1;
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Dependencies of every task (inverse of `unlocks`).
    pub fn predecessors(&self) -> Vec<Vec<u32>> {
        let mut pred = vec![Vec::new(); self.tasks.len()];
        for (i, t) in self.tasks.iter().enumerate() {
            for &u in &t.unlocks {
                pred[u as usize].push(i as u32);
            }
        }
        pred
    }

    /// Kahn's algorithm; on failure returns a dependency cycle.
    pub fn check_acyclic(&self) -> Result<()> {
        let n = self.tasks.len();
        let mut wait: Vec<u32> = self.tasks.iter().map(|t| t.wait).collect();
        let mut stack: Vec<u32> = (0..n as u32).filter(|&i| wait[i as usize] == 0).collect();
        let mut seen = 0;
        while let Some(i) = stack.pop() {
            seen += 1;
            for &u in &self.tasks[i as usize].unlocks {
                wait[u as usize] -= 1;
                if wait[u as usize] == 0 {
                    stack.push(u);
                }
            }
        }
        if seen == n {
            return Ok(());
        }
        // every unresolved task has an unresolved predecessor: walk back
        let pred = self.predecessors();
        let mut at = (0..n).find(|&i| wait[i] > 0).unwrap() as u32;
        let mut order = vec![usize::MAX; n];
        let mut chain = Vec::new();
        while order[at as usize] == usize::MAX {
            order[at as usize] = chain.len();
            chain.push(at);
            at = *pred[at as usize].iter().find(|&&p| wait[p as usize] > 0).unwrap();
        }
        let mut cycle = chain.split_off(order[at as usize]);
        cycle.reverse();
        Err(Error::Cycle(cycle))
    }
}
