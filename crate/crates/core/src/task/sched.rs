//! Scheduling state machine: dependency counters, per-rank ready queues
//! ordered by estimated cost, delivery-time gating of recv tasks, and lock
//! acquisition. Callers drive it under a mutex and supply the clock.

use alloc::collections::BinaryHeap;
use alloc::format;
use alloc::vec::Vec;
use core::cmp::Reverse;

use crate::task::graph::TaskGraph;
use crate::task::locks::LockTable;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Claim {
    Run(u32),
    /// Nothing runnable for this rank now; try again after a completion or
    /// at the given time, whichever comes first.
    Idle(Option<u64>),
    Finished,
}

type Key = (u64, Reverse<u32>);

pub struct Scheduler {
    wait: Vec<u32>,
    rank: Vec<u16>,
    cost: Vec<u64>,
    not_before: Vec<u64>,
    queues: Vec<BinaryHeap<Key>>,
    timed: Vec<(u64, u32)>,
    locks: LockTable,
    task_locks: Vec<Vec<u32>>,
    unlocks: Vec<Vec<u32>>,
    running: usize,
    remaining: usize,
}

impl Scheduler {
    /// `lock_parent` describes the lock hierarchy (see [`LockTable::new`]).
    pub fn new(g: &TaskGraph, n_ranks: usize, lock_parent: Vec<u32>) -> Self {
        let n = g.len();
        let mut s = Scheduler {
            wait: g.tasks.iter().map(|t| t.wait).collect(),
            rank: g.tasks.iter().map(|t| t.rank).collect(),
            cost: g.tasks.iter().map(|t| t.cost_estimate.max(0.0).to_bits()).collect(),
            not_before: alloc::vec![0; n],
            queues: (0..n_ranks).map(|_| BinaryHeap::new()).collect(),
            timed: Vec::new(),
            locks: LockTable::new(lock_parent),
            task_locks: g.tasks.iter().map(|t| t.locks.clone()).collect(),
            unlocks: g.tasks.iter().map(|t| t.unlocks.clone()).collect(),
            running: 0,
            remaining: n,
        };
        for i in 0..n as u32 {
            if s.wait[i as usize] == 0 {
                s.enqueue(i);
            }
        }
        s
    }

    fn enqueue(&mut self, i: u32) {
        let r = self.rank[i as usize] as usize;
        self.queues[r].push((self.cost[i as usize], Reverse(i)));
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }

    /// Pick the costliest ready task of `rank` whose locks are all free.
    pub fn claim(&mut self, rank: u16, now: u64) -> Result<Claim> {
        if self.remaining == 0 {
            return Ok(Claim::Finished);
        }
        let mut k = 0;
        while k < self.timed.len() {
            if self.timed[k].0 <= now {
                let (_, i) = self.timed.swap_remove(k);
                self.enqueue(i);
            } else {
                k += 1;
            }
        }
        let q = &mut self.queues[rank as usize];
        let mut skipped = Vec::new();
        let mut found = None;
        while let Some(key) = q.pop() {
            let i = key.1 .0;
            if self.locks.try_lock_all(&self.task_locks[i as usize]) {
                found = Some(i);
                break;
            }
            skipped.push(key);
        }
        let blocked = !skipped.is_empty();
        q.extend(skipped);
        if let Some(i) = found {
            self.running += 1;
            return Ok(Claim::Run(i));
        }
        if self.running == 0 && self.timed.is_empty() {
            // nothing in flight can ever release a lock or a dependency
            if blocked {
                return Err(Error::Comm(format!("deadlock: rank {rank} holds tasks whose locks can never be taken")));
            }
            if self.queues.iter().all(|q| q.is_empty()) {
                let stuck: Vec<u32> = (0..self.wait.len() as u32).filter(|&i| self.wait[i as usize] > 0).take(16).collect();
                return Err(Error::Comm(format!("deadlock: {} tasks remain unreachable, e.g. {stuck:?}", self.remaining)));
            }
        }
        Ok(Claim::Idle(self.timed.iter().map(|t| t.0).min()))
    }

    /// Finish task `i`. `release` carries the matching recv of a send and the
    /// time its message is delivered.
    pub fn complete(&mut self, i: u32, release: Option<(u32, u64)>, now: u64) {
        self.locks.unlock_all(&self.task_locks[i as usize]);
        self.running -= 1;
        self.remaining -= 1;
        if let Some((r, t)) = release {
            self.not_before[r as usize] = self.not_before[r as usize].max(t);
        }
        let unlocks = core::mem::take(&mut self.unlocks[i as usize]);
        for &u in &unlocks {
            let w = &mut self.wait[u as usize];
            *w -= 1;
            if *w == 0 {
                let nb = self.not_before[u as usize];
                if nb > now {
                    self.timed.push((nb, u));
                } else {
                    self.enqueue(u);
                }
            }
        }
    }
}
