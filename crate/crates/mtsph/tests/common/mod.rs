//! Helpers shared by the integration tests and the acceptance suite.

#![allow(dead_code)]

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use mtsph::exec::{self, Clock};
use mtsph_core::task::{Task, TaskGraph, TaskKind};
use mtsph_core::tree::NO_CELL;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random DAG with random hierarchical locks. Returns the graph and the
/// lock parent table (parents always have smaller ids).
pub fn random_graph(seed: u64, max_tasks: usize, n_ranks: usize) -> (TaskGraph, Vec<u32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_tasks);
    let n_locks = rng.random_range(1..=24u32);
    let parent: Vec<u32> =
        (0..n_locks).map(|l| if l == 0 || rng.random_bool(0.3) { NO_CELL } else { rng.random_range(0..l) }).collect();
    let mut g = TaskGraph::default();
    for i in 0..n {
        let kind = TaskKind::ALL[rng.random_range(0..8)];
        let mut t = Task::new(kind, i as u32);
        t.rank = rng.random_range(0..n_ranks) as u16;
        t.cost_estimate = rng.random_range(0.0..10.0);
        let k = rng.random_range(0..=3);
        for _ in 0..k {
            let l = rng.random_range(0..n_locks);
            if !t.locks.contains(&l) {
                t.locks.push(l);
            }
        }
        // a task never locks a cell together with its ancestor
        let locks = t.locks.clone();
        t.locks.retain(|&l| !locks.iter().any(|&o| o != l && is_ancestor(&parent, o, l)));
        t.locks.sort_unstable();
        g.add(t);
    }
    for j in 1..n {
        for _ in 0..rng.random_range(0..3) {
            let i = rng.random_range(0..j);
            if !g.tasks[i].unlocks.contains(&(j as u32)) {
                g.depend(i as u32, j as u32);
            }
        }
    }
    (g, parent)
}

/// Whether `a` is a strict ancestor of `b`.
pub fn is_ancestor(parent: &[u32], a: u32, b: u32) -> bool {
    let mut c = parent[b as usize];
    while c != NO_CELL {
        if c == a {
            return true;
        }
        c = parent[c as usize];
    }
    false
}

/// Two lock sets conflict if they share a lock or one holds an ancestor of
/// a lock of the other.
pub fn locks_conflict(parent: &[u32], a: &[u32], b: &[u32]) -> bool {
    a.iter().any(|&x| b.iter().any(|&y| x == y || is_ancestor(parent, x, y) || is_ancestor(parent, y, x)))
}

/// Start and end of every execution on a global logical clock.
#[derive(Debug, Default)]
pub struct Recorder {
    seq: AtomicU64,
    pub events: Mutex<Vec<(u32, u64, u64)>>,
}

impl Recorder {
    pub fn run(&self, g: &TaskGraph, parent: &[u32], n_ranks: usize, workers: usize) -> mtsph::Result<()> {
        exec::run::<_, mtsph::Error>(g, n_ranks, workers, parent.to_vec(), &Clock::default(), |i, _| {
            let start = self.seq.fetch_add(1, Ordering::SeqCst);
            std::hint::black_box((0..50).sum::<u64>());
            let end = self.seq.fetch_add(1, Ordering::SeqCst);
            self.events.lock().unwrap().push((i, start, end));
            Ok(None)
        })?;
        Ok(())
    }

    /// Every task ran once, dependencies finished before their successors
    /// started, and no two conflicting tasks overlapped.
    pub fn check(&self, g: &TaskGraph, parent: &[u32]) -> Result<(), String> {
        let ev = self.events.lock().unwrap();
        let mut span = vec![None; g.len()];
        for &(i, s, e) in ev.iter() {
            if span[i as usize].replace((s, e)).is_some() {
                return Err(format!("task {i} ran twice"));
            }
        }
        let span: Vec<(u64, u64)> =
            span.into_iter().enumerate().map(|(i, s)| s.ok_or(format!("task {i} never ran"))).collect::<Result<_, _>>()?;
        for (i, t) in g.tasks.iter().enumerate() {
            for &j in &t.unlocks {
                if span[i].1 >= span[j as usize].0 {
                    return Err(format!("task {j} started before its dependency {i} ended"));
                }
            }
        }
        for i in 0..g.len() {
            for j in i + 1..g.len() {
                let (a, b) = (span[i], span[j]);
                if a.0 < b.1 && b.0 < a.1 && locks_conflict(parent, &g.tasks[i].locks, &g.tasks[j].locks) {
                    return Err(format!("conflicting tasks {i} and {j} overlapped"));
                }
            }
        }
        Ok(())
    }
}

/// Largest relative difference between two particle sets matched by id,
/// over position, velocity, h, u and rho.
pub fn max_rel_diff(a: &[mtsph_core::sph::Particle], b: &[mtsph_core::sph::Particle]) -> f64 {
    assert_eq!(a.len(), b.len());
    let rel = |x: f64, y: f64| if x == y { 0.0 } else { (x - y).abs() / x.abs().max(y.abs()).max(1e-300) };
    let mut m: f64 = 0.0;
    for (p, q) in a.iter().zip(b) {
        assert_eq!(p.id, q.id);
        for k in 0..3 {
            m = m.max(rel(p.pos[k], q.pos[k])).max(rel(p.vel[k], q.vel[k]));
        }
        m = m.max(rel(p.h, q.h)).max(rel(p.u, q.u)).max(rel(p.rho, q.rho));
    }
    m
}
