//! Multi-threaded executor for a merged task graph. Each rank gets its own
//! pool of workers that only take that rank's tasks; all pools share one
//! scheduler under a mutex.

use std::io::Write;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use mtsph_core::task::{Claim, Scheduler, TaskGraph};
use mtsph_core::{Error, Result};
use serde::Serialize;

/// Monotonic nanoseconds since construction.
#[derive(Clone, Copy, Debug)]
pub struct Clock {
    start: Instant,
}

impl Default for Clock {
    fn default() -> Self {
        Clock { start: Instant::now() }
    }
}

impl Clock {
    pub fn now_ns(&self) -> u64 {
        self.start.elapsed().as_nanos() as u64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TaskRecord {
    pub start_ns: u64,
    pub end_ns: u64,
    pub worker: u32,
}

#[derive(Clone, Debug, Default)]
pub struct ExecReport {
    /// Indexed by task id.
    pub records: Vec<TaskRecord>,
    /// Indexed by worker; worker `w` serves rank `w / workers_per_rank`.
    pub busy_ns: Vec<u64>,
    pub idle_ns: Vec<u64>,
    pub makespan_ns: u64,
    pub workers_per_rank: usize,
}

#[derive(Serialize)]
struct Line<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    kind: &'a str,
    cells: Vec<u32>,
    start_ns: u64,
    end_ns: u64,
    worker: u32,
}

impl ExecReport {
    pub fn rank_busy_ns(&self, n_ranks: usize) -> Vec<u64> {
        (0..n_ranks).map(|r| self.busy_ns[r * self.workers_per_rank..(r + 1) * self.workers_per_rank].iter().sum()).collect()
    }

    pub fn rank_idle_ns(&self, n_ranks: usize) -> Vec<u64> {
        (0..n_ranks).map(|r| self.idle_ns[r * self.workers_per_rank..(r + 1) * self.workers_per_rank].iter().sum()).collect()
    }

    /// One JSON object per task: kind, cells, start_ns, end_ns, worker.
    pub fn write_jsonl(&self, g: &TaskGraph, seed: Option<u64>, mut out: impl Write) -> std::io::Result<()> {
        for (t, r) in g.tasks.iter().zip(&self.records) {
            let mut cells = vec![t.ci];
            if t.cj != mtsph_core::tree::NO_CELL {
                cells.push(t.cj);
            }
            let line = Line { seed, kind: t.kind.name(), cells, start_ns: r.start_ns, end_ns: r.end_ns, worker: r.worker };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

struct State<E> {
    sched: Scheduler,
    records: Vec<TaskRecord>,
    error: Option<E>,
}

/// Execute every task of `g` exactly once with `workers_per_rank` threads per
/// rank. `body(task, worker)` performs a task and may return
/// `(recv task, delivery time)` to gate a matching receive.
pub fn run<F, E>(
    g: &TaskGraph,
    n_ranks: usize,
    workers_per_rank: usize,
    lock_parent: Vec<u32>,
    clock: &Clock,
    body: F,
) -> Result<ExecReport, E>
where
    F: Fn(u32, usize) -> Result<Option<(u32, u64)>, E> + Sync,
    E: From<Error> + Send,
{
    if n_ranks == 0 || workers_per_rank == 0 {
        return Err(Error::Config("executor needs at least one rank and one worker".into()).into());
    }
    if let Some(t) = g.tasks.iter().find(|t| t.rank as usize >= n_ranks) {
        return Err(Error::Config(format!("task of rank {} with {n_ranks} ranks", t.rank)).into());
    }
    let n_workers = n_ranks * workers_per_rank;
    let state = Mutex::new(State {
        sched: Scheduler::new(g, n_ranks, lock_parent),
        records: vec![TaskRecord::default(); g.len()],
        error: None,
    });
    let cv = Condvar::new();
    let t0 = clock.now_ns();
    let mut busy = vec![0u64; n_workers];
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..n_workers)
            .map(|w| {
                let (state, cv, body) = (&state, &cv, &body);
                s.spawn(move || worker(w, (w / workers_per_rank) as u16, state, cv, clock, body))
            })
            .collect();
        for (w, h) in handles.into_iter().enumerate() {
            busy[w] = h.join().expect("worker panicked");
        }
    });
    let makespan = clock.now_ns() - t0;
    let st = state.into_inner().unwrap();
    if let Some(e) = st.error {
        return Err(e);
    }
    let idle = busy.iter().map(|&b| makespan.saturating_sub(b)).collect();
    Ok(ExecReport { records: st.records, busy_ns: busy, idle_ns: idle, makespan_ns: makespan, workers_per_rank })
}

fn worker<F, E>(w: usize, rank: u16, state: &Mutex<State<E>>, cv: &Condvar, clock: &Clock, body: &F) -> u64
where
    F: Fn(u32, usize) -> Result<Option<(u32, u64)>, E> + Sync,
    E: From<Error> + Send,
{
    let mut busy = 0;
    let mut guard = state.lock().unwrap();
    loop {
        if guard.error.is_some() {
            break;
        }
        let now = clock.now_ns();
        match guard.sched.claim(rank, now) {
            Ok(Claim::Run(i)) => {
                drop(guard);
                let start = clock.now_ns();
                let res = body(i, w);
                let end = clock.now_ns();
                busy += end - start;
                guard = state.lock().unwrap();
                guard.records[i as usize] = TaskRecord { start_ns: start, end_ns: end, worker: w as u32 };
                match res {
                    Ok(release) => guard.sched.complete(i, release, clock.now_ns()),
                    Err(e) => guard.error = Some(e),
                }
                cv.notify_all();
            }
            Ok(Claim::Idle(wake)) => {
                guard = match wake {
                    Some(t) => cv.wait_timeout(guard, Duration::from_nanos(t.saturating_sub(now).max(1))).unwrap().0,
                    None => cv.wait(guard).unwrap(),
                };
            }
            Ok(Claim::Finished) => break,
            Err(e) => {
                guard.error = Some(e.into());
                break;
            }
        }
    }
    cv.notify_all();
    busy
}
