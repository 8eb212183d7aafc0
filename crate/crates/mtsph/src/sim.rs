//! Simulated multi-rank driver. Every rank owns the particles of its
//! top-level cells and keeps read-only proxies of foreign cells it needs,
//! filled by recv tasks. The step graph of all ranks is merged and run by
//! one executor with a separate worker pool per rank, so ranks make
//! progress concurrently while messages are in flight.
//!
//! The driver itself is the control plane: it rebuilds the tree, plans the
//! step, decides repartitioning and keeps the tree aggregates (largest h,
//! smallest bin, drift bound) in sync after each step.

use std::collections::{BTreeSet, HashMap};
use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use mtsph_core::comm::wire::{decode_density, decode_positions, encode_density, encode_positions};
use mtsph_core::comm::{plan_messages, Channels, DensityRecord, LinkModel, MsgSpec, Phase, PositionRecord};
use mtsph_core::decomp::{
    build_cell_graph, cell_loads, partition_graph, partition_grid, ticks_to_active, CellGraph, PartitionOptions,
    Strategy,
};
use mtsph_core::hydro::{
    apply_density, apply_force, density_pair, density_self, drift_cell, force_pair, force_self, ghost, kick_cell,
    open_step, sort_cell, KickMode, PairView, Slot, StepCtx,
};
use mtsph_core::sph::{Particle, SphConfig};
use mtsph_core::task::{build_graph, merge_ranks, CostModel, StepInput, Task, TaskGraph, TaskKind};
use mtsph_core::time::{drift_particle, max_active_bin, wrap_particle, DriftOutcome, Scheme, StepClock, TimeGrid};
use mtsph_core::tree::{
    enumerate_interactions, mark_active_cells, maximal_cells, Interaction, Reach, SortKey, Tree, TreeParams,
    EMPTY_BIN, NO_CELL, N_DIRS,
};
use mtsph_core::Vec3;
use serde::{Deserialize, Serialize};

use crate::exec::{self, Clock, ExecReport};
use crate::store::SharedSlots;
use crate::{Error, Result};

/// How top-level cells are assigned to ranks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decomp {
    /// Equal slabs of the top-level grid, fixed for the whole run.
    Grid,
    /// Multilevel partition of the weighted cell graph, redone when the
    /// measured load drifts out of balance.
    Graph(Strategy),
}

impl Decomp {
    pub fn name(self) -> &'static str {
        match self {
            Decomp::Grid => "grid",
            Decomp::Graph(s) => s.name(),
        }
    }

    pub fn parse(s: &str) -> Option<Decomp> {
        if s == "grid" {
            Some(Decomp::Grid)
        } else {
            Strategy::parse(s).map(Decomp::Graph)
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub sph: SphConfig,
    pub t_end: f64,
    pub n_bin: u32,
    pub scheme: Scheme,
    pub decomp: Decomp,
    pub ranks: usize,
    pub workers: usize,
    pub top_dims: [usize; 3],
    pub split_threshold: usize,
    pub max_depth: u8,
    pub link: LinkModel,
    /// Rebuild the tree at least this often (in steps).
    pub rebuild_every: u64,
    /// Put every particle in this bin regardless of its time-step.
    pub forced_bin: Option<u8>,
    pub balance_tol: f64,
    /// Busy-time imbalance above which a rebuild counts towards repartitioning.
    pub repartition_threshold: f64,
    /// Consecutive imbalanced rebuilds that trigger a repartition.
    pub repartition_patience: u32,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            sph: SphConfig::default(),
            t_end: 1.0,
            n_bin: 32,
            scheme: Scheme::DriftActive,
            decomp: Decomp::Grid,
            ranks: 1,
            workers: 1,
            top_dims: [4, 4, 4],
            split_threshold: 400,
            max_depth: 12,
            link: LinkModel::default(),
            rebuild_every: 64,
            forced_bin: None,
            balance_tol: 0.05,
            repartition_threshold: 0.25,
            repartition_patience: 3,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |s: String| Err(Error::Config(s));
        self.sph.validate()?;
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end {} must be positive", self.t_end));
        }
        if !(1..=62).contains(&self.n_bin) {
            return bad(format!("n_bin {} outside 1..=62", self.n_bin));
        }
        if self.ranks == 0 || self.ranks > u16::MAX as usize || self.workers == 0 {
            return bad("ranks and workers must be at least 1".into());
        }
        if self.top_dims.contains(&0) || self.split_threshold == 0 || self.rebuild_every == 0 {
            return bad("top_dims, split_threshold and rebuild_every must be positive".into());
        }
        if self.forced_bin.is_some_and(|b| b as u32 > self.n_bin) {
            return bad(format!("forced_bin above n_bin {}", self.n_bin));
        }
        if !(self.balance_tol >= 0.0) || !(self.repartition_threshold >= 0.0) {
            return bad("balance_tol and repartition_threshold must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RankMetrics {
    pub busy_ns: u64,
    pub idle_ns: u64,
    pub messages: u64,
    pub bytes: u64,
    pub n_local: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step_index: u64,
    pub tick: u64,
    pub time: f64,
    /// Largest active bin; `None` for the initial all-active force step.
    pub m: Option<u32>,
    pub n_active: u64,
    pub n_kicked: u64,
    pub n_drifted: u64,
    /// Particle pairs whose mutual force was evaluated.
    pub n_pair_interactions: u64,
    pub n_tasks: u64,
    pub wall_ns: u64,
    pub rebuild: bool,
    pub per_rank: Vec<RankMetrics>,
}

impl StepMetrics {
    pub fn messages(&self) -> u64 {
        self.per_rank.iter().map(|r| r.messages).sum()
    }

    pub fn bytes(&self) -> u64 {
        self.per_rank.iter().map(|r| r.bytes).sum()
    }
}

struct RankState {
    slots: SharedSlots,
    /// Per top-level cell and phase: the step whose message last filled the
    /// proxy. Physics tasks check it before reading foreign data.
    epochs: Vec<[AtomicU64; 2]>,
}

fn poison() -> Slot {
    let nan = Vec3::splat(f64::NAN);
    Slot::new(Particle { id: u64::MAX, pos: nan, vel: nan, mass: f64::NAN, h: f64::NAN, u: f64::NAN, ..Default::default() })
}

/// Route particles (in tree order) to their owning ranks. Each rank gets an
/// array of the full length in which foreign entries are placeholders until
/// a recv fills them as proxies.
pub fn distribute(tree: &Tree, owner: &[u16], n_ranks: usize, slots: &[Slot]) -> Result<Vec<Vec<Slot>>> {
    if owner.len() != tree.n_top() {
        return Err(Error::Config(format!("{} owners for {} top-level cells", owner.len(), tree.n_top())));
    }
    if let Some(t) = owner.iter().position(|&r| r as usize >= n_ranks) {
        return Err(mtsph_core::Error::Orphan(t).into());
    }
    let mut out: Vec<Vec<Slot>> = (0..n_ranks).map(|_| vec![poison(); slots.len()]).collect();
    for (t, &r) in owner.iter().enumerate() {
        let range = tree.cells[t].range();
        out[r as usize][range.clone()].clone_from_slice(&slots[range]);
    }
    Ok(out)
}

/// Foreign top-level cells rank `rank` must mirror: those paired with one of
/// its cells by an interaction.
pub fn proxy_tops(tree: &Tree, interactions: &[Interaction], owner: &[u16], rank: u16) -> BTreeSet<u32> {
    let top = |c: u32| tree.cells[c as usize].top;
    let mut out = BTreeSet::new();
    for it in interactions {
        let (ta, tb) = (top(it.a), top(it.b));
        if owner[ta as usize] == rank && owner[tb as usize] != rank {
            out.insert(tb);
        }
        if owner[tb as usize] == rank && owner[ta as usize] != rank {
            out.insert(ta);
        }
    }
    out
}

pub struct Sim {
    cfg: SimConfig,
    grid: TimeGrid,
    boxsize: Vec3,
    h_cap: f64,
    tree: Tree,
    owner: Vec<u16>,
    ranks: Vec<RankState>,
    clock: StepClock,
    costs: CostModel,
    epoch: u64,
    initialised: bool,
    done: bool,
    steps_since_rebuild: u64,
    rebuild_pending: bool,
    first_rebuild: bool,
    imbalance_streak: u32,
    busy_since_rebuild: Vec<u64>,
    repartitions: u64,
    keep_trace: bool,
    trace: Option<(TaskGraph, ExecReport)>,
}

impl Sim {
    pub fn new(cfg: SimConfig, particles: Vec<Particle>, boxsize: Vec3) -> Result<Sim> {
        cfg.validate()?;
        let grid = TimeGrid::new(0.0, cfg.t_end, cfg.n_bin)?;
        if !(0..3).all(|k| boxsize[k] > 0.0 && boxsize[k].is_finite()) {
            return Err(Error::Config(format!("box size {:?} must be positive", boxsize.0)));
        }
        let mut ids = BTreeSet::new();
        for p in &particles {
            if !(0..3).all(|k| p.pos[k] >= 0.0 && p.pos[k] < boxsize[k]) {
                return Err(mtsph_core::Error::OutsideBox { id: p.id, pos: p.pos.0 }.into());
            }
            if !(p.mass > 0.0 && p.h > 0.0 && p.u >= 0.0) {
                return Err(Error::Config(format!("particle {} needs positive mass and h, non-negative u", p.id)));
            }
            if !ids.insert(p.id) {
                return Err(Error::Config(format!("duplicate particle id {}", p.id)));
            }
        }
        let params = TreeParams { top_dims: cfg.top_dims, split_threshold: cfg.split_threshold, max_depth: cfg.max_depth };
        let pos: Vec<Vec3> = particles.iter().map(|p| p.pos).collect();
        let (mut tree, perm) = Tree::build(&pos, boxsize, params)?;
        let h_cap = cfg.sph.h_max.min(0.4 * tree.top_edge());
        let slots: Vec<Slot> = perm
            .iter()
            .map(|&i| {
                let q = &particles[i as usize];
                Slot::new(Particle::new(q.id, q.pos, q.vel, q.mass, q.h.min(h_cap), q.u))
            })
            .collect();
        tree.refresh_all(|i| (slots[i].p.h, slots[i].p.bin, 0.0));
        let n_ranks = cfg.ranks;
        let mut sim = Sim {
            grid,
            boxsize,
            h_cap,
            tree,
            owner: Vec::new(),
            ranks: Vec::new(),
            clock: StepClock::default(),
            costs: CostModel::default(),
            epoch: 0,
            initialised: false,
            done: false,
            steps_since_rebuild: 0,
            rebuild_pending: false,
            first_rebuild: true,
            imbalance_streak: 0,
            busy_since_rebuild: vec![0; n_ranks],
            repartitions: 0,
            keep_trace: false,
            trace: None,
            cfg,
        };
        sim.owner = sim.choose_owner()?;
        sim.install(&slots)?;
        Ok(sim)
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn owner(&self) -> &[u16] {
        &self.owner
    }

    pub fn boxsize(&self) -> Vec3 {
        self.boxsize
    }

    pub fn h_cap(&self) -> f64 {
        self.h_cap
    }

    pub fn clock(&self) -> StepClock {
        self.clock
    }

    pub fn costs(&self) -> &CostModel {
        &self.costs
    }

    pub fn n_particles(&self) -> usize {
        self.tree.cells.iter().take(self.tree.n_top()).map(|c| c.count as usize).sum()
    }

    pub fn repartitions(&self) -> u64 {
        self.repartitions
    }

    /// True once the step at the final tick has run.
    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Keep the task graph and execution report of the latest step.
    pub fn set_trace(&mut self, on: bool) {
        self.keep_trace = on;
        if !on {
            self.trace = None;
        }
    }

    pub fn last_trace(&self) -> Option<&(TaskGraph, ExecReport)> {
        self.trace.as_ref()
    }

    fn reach(&self) -> Reach {
        Reach { growth: self.cfg.sph.h_growth, h_cap: self.h_cap }
    }

    fn owned(&self, t: usize) -> &[Slot] {
        let r = self.owner[t] as usize;
        // SAFETY: called only between steps, when no task is running
        unsafe { self.ranks[r].slots.slice(self.tree.cells[t].range()) }
    }

    /// Owned particle slots in tree order.
    fn gather(&self) -> Vec<Slot> {
        let mut out = Vec::with_capacity(self.n_particles());
        for t in 0..self.tree.n_top() {
            out.extend(self.owned(t).iter().map(|s| Slot::new(s.p.clone())));
        }
        out
    }

    /// Current particle states ordered by id.
    pub fn particles(&self) -> Vec<Particle> {
        let mut v: Vec<Particle> = (0..self.tree.n_top()).flat_map(|t| self.owned(t).iter().map(|s| s.p.clone())).collect();
        v.sort_by_key(|p| p.id);
        v
    }

    /// Kinetic plus internal energy. Velocities are only synchronised at the
    /// start and the end of the run.
    pub fn total_energy(&self) -> f64 {
        (0..self.tree.n_top()).flat_map(|t| self.owned(t)).map(|s| s.p.mass * (0.5 * s.p.vel.norm2() + s.p.u)).sum()
    }

    /// Particles per bin, indexed by bin.
    pub fn bin_histogram(&self) -> Vec<u64> {
        let mut h = vec![0u64; self.cfg.n_bin as usize + 1];
        for t in 0..self.tree.n_top() {
            for s in self.owned(t) {
                h[s.p.bin as usize] += 1;
            }
        }
        h
    }

    /// Weighted top-level cell graph for the current state.
    pub fn cell_graph(&self, strategy: Strategy) -> CellGraph {
        let list = enumerate_interactions(&self.tree, u32::MAX, self.reach());
        let loads = cell_loads(&self.tree, &list, &self.costs);
        let end = self.grid.end_tick();
        let ticks: Vec<u64> = (0..self.tree.n_top())
            .map(|t| ticks_to_active(self.tree.cells[t].min_bin, self.clock.tick, end))
            .collect();
        build_cell_graph(&loads, &ticks, self.cfg.n_bin, strategy)
    }

    fn choose_owner(&self) -> Result<Vec<u16>> {
        let n_top = self.tree.n_top();
        Ok(match self.cfg.decomp {
            Decomp::Grid => partition_grid(self.cfg.top_dims, self.cfg.ranks)?.assignment,
            Decomp::Graph(_) if self.cfg.ranks == 1 => vec![0; n_top],
            Decomp::Graph(s) => {
                let g = self.cell_graph(s);
                let opts = PartitionOptions { balance_tol: self.cfg.balance_tol, seed: self.cfg.seed };
                partition_graph(&g, self.cfg.ranks, &opts)?.assignment
            }
        })
    }

    fn install(&mut self, slots: &[Slot]) -> Result<()> {
        let per_rank = distribute(&self.tree, &self.owner, self.cfg.ranks, slots)?;
        let n_top = self.tree.n_top();
        self.ranks = per_rank
            .into_iter()
            .map(|v| RankState {
                slots: SharedSlots::new(v),
                epochs: (0..n_top).map(|_| [AtomicU64::new(0), AtomicU64::new(0)]).collect(),
            })
            .collect();
        Ok(())
    }

    /// Largest pair separation the tree may have to cover, against the top
    /// cell edge: beyond it a pair could span non-adjacent top cells.
    fn tree_is_stale(&self) -> bool {
        let tops = &self.tree.cells[..self.tree.n_top()];
        let h = tops.iter().map(|c| c.h_max).fold(0.0, f64::max);
        let dx = tops.iter().map(|c| c.dx_max).fold(0.0, f64::max);
        self.reach().radius(h, h) + 2.0 * dx >= self.tree.top_edge()
    }

    fn repartition_due(&mut self) -> bool {
        let busy = std::mem::replace(&mut self.busy_since_rebuild, vec![0; self.cfg.ranks]);
        if !matches!(self.cfg.decomp, Decomp::Graph(_)) || self.cfg.ranks == 1 {
            return false;
        }
        if std::mem::take(&mut self.first_rebuild) {
            return true;
        }
        let mean = busy.iter().sum::<u64>() as f64 / busy.len() as f64;
        let max = busy.iter().copied().max().unwrap_or(0) as f64;
        if mean > 0.0 && max / mean - 1.0 > self.cfg.repartition_threshold {
            self.imbalance_streak += 1;
        } else {
            self.imbalance_streak = 0;
        }
        if self.imbalance_streak >= self.cfg.repartition_patience {
            self.imbalance_streak = 0;
            true
        } else {
            false
        }
    }

    /// Drift everything to `tick`, fold positions into the box, rebuild the
    /// tree and redistribute. Returns the number of particles moved.
    fn rebuild(&mut self, tick: u64, repartition: bool) -> Result<u64> {
        let mut all = self.gather();
        let mut moved = 0;
        for s in &mut all {
            let p = &mut s.p;
            if drift_particle(p, tick, &self.grid)? == DriftOutcome::Moved {
                moved += 1;
            }
            wrap_particle(p, self.boxsize);
            p.pos_rebuild = p.pos;
            p.dx_bound = (p.anchor - p.pos_rebuild).min_image(self.boxsize).norm() + p.vel.norm() * self.grid.bin_dt(p.bin);
        }
        let pos: Vec<Vec3> = all.iter().map(|s| s.p.pos).collect();
        let (mut tree, perm) = Tree::build(&pos, self.boxsize, self.tree.params)?;
        let slots: Vec<Slot> = perm.iter().map(|&i| std::mem::take(&mut all[i as usize])).collect();
        tree.refresh_all(|i| (slots[i].p.h, slots[i].p.bin, slots[i].p.dx_bound));
        self.tree = tree;
        if repartition {
            self.owner = self.choose_owner()?;
            self.repartitions += 1;
        }
        self.install(&slots)?;
        self.steps_since_rebuild = 0;
        Ok(moved)
    }

    /// Run steps until the final tick has been processed.
    pub fn run_to_end(&mut self, mut on_step: impl FnMut(&StepMetrics)) -> Result<Vec<StepMetrics>> {
        let mut out = Vec::new();
        while !self.done {
            let m = self.step()?;
            on_step(&m);
            out.push(m);
        }
        Ok(out)
    }

    /// Run at most `n` steps (fewer if the run ends).
    pub fn run_steps(&mut self, n: u64) -> Result<Vec<StepMetrics>> {
        let mut out = Vec::new();
        while !self.done && (out.len() as u64) < n {
            out.push(self.step()?);
        }
        Ok(out)
    }

    pub fn step(&mut self) -> Result<StepMetrics> {
        if self.done {
            return Err(Error::Config("the run has already reached t_end".into()));
        }
        let wall = Instant::now();
        let init = !self.initialised;
        let tick = self.clock.tick;
        let m = if init { u32::MAX } else { max_active_bin(tick) };
        let n_ranks = self.cfg.ranks;

        let mut rebuilt = false;
        let mut n_drifted = 0;
        if !init
            && (self.rebuild_pending || self.steps_since_rebuild >= self.cfg.rebuild_every || self.tree_is_stale())
        {
            let repartition = self.repartition_due();
            n_drifted += self.rebuild(tick, repartition)?;
            self.rebuild_pending = false;
            rebuilt = true;
        }
        self.epoch += 1;

        let tree = &self.tree;
        let n_top = tree.n_top();
        let n_cells = tree.cells.len();
        let sets = mark_active_cells(tree, m, self.reach());
        let drift_cells: Vec<u32> = match self.cfg.scheme {
            Scheme::Global | Scheme::DriftAll => (0..n_top as u32).filter(|&t| tree.cells[t as usize].count > 0).collect(),
            Scheme::DriftActive => maximal_cells(tree, &sets.drift),
        };
        let messages = plan_messages(tree, &sets.interactions, &sets.active, &self.owner);
        let inp = StepInput {
            tree,
            interactions: &sets.interactions,
            active: &sets.active,
            drift_cells: &drift_cells,
            owner: &self.owner,
            messages: &messages,
            costs: &self.costs,
        };
        let graphs = (0..n_ranks).map(|r| build_graph(&inp, r as u16)).collect::<mtsph_core::Result<Vec<_>>>()?;
        let g = merge_ranks(graphs, n_cells)?;
        let mut lock_parent = Vec::with_capacity(n_ranks * n_cells);
        for r in 0..n_ranks {
            let base = (r * n_cells) as u32;
            lock_parent.extend(tree.cells.iter().map(|c| if c.parent == NO_CELL { NO_CELL } else { base + c.parent }));
        }

        let mut n_active = 0u64;
        for t in (0..n_top).filter(|&t| sets.active[t]) {
            n_active += self.owned(t).iter().filter(|s| (s.p.bin as u32) <= m).count() as u64;
        }

        let ctx = StepCtx {
            tick,
            m,
            cfg: &self.cfg.sph,
            grid: &self.grid,
            boxsize: self.boxsize,
            h_cap: self.h_cap,
            forced_bin: self.cfg.forced_bin,
        };
        let clock = Clock::default();
        let env = Env {
            g: &g,
            tree,
            owner: &self.owner,
            ranks: &self.ranks,
            ctx,
            mode: if self.cfg.scheme == Scheme::Global { KickMode::Deferred } else { KickMode::Individual },
            epoch: self.epoch,
            msgs: messages.iter().map(|s| ((s.src, s.dest, s.top), s)).collect(),
            sorts: (0..n_ranks).map(|_| (0..n_cells * N_DIRS).map(|_| OnceLock::new()).collect()).collect(),
            mailbox: Mutex::new(HashMap::new()),
            channels: Mutex::new(Channels::new(self.cfg.link)),
            clock: &clock,
            drifted: AtomicU64::new(0),
            kicked: AtomicU64::new(0),
            interactions: AtomicU64::new(0),
            messages: (0..n_ranks).map(|_| AtomicU64::new(0)).collect(),
            bytes: (0..n_ranks).map(|_| AtomicU64::new(0)).collect(),
        };
        let report = exec::run(&g, n_ranks, self.cfg.workers, lock_parent, &clock, |i, _| env.run_task(i))?;
        n_drifted += env.drifted.load(Ordering::Relaxed);
        let n_kicked = env.kicked.load(Ordering::Relaxed);
        let n_pair_interactions = env.interactions.load(Ordering::Relaxed);
        let msg_counts: Vec<u64> = env.messages.iter().map(|a| a.load(Ordering::Relaxed)).collect();
        let byte_counts: Vec<u64> = env.bytes.iter().map(|a| a.load(Ordering::Relaxed)).collect();
        drop(env);

        for (t, rec) in g.tasks.iter().zip(&report.records) {
            self.costs.record(t.kind, t.na, t.nb, rec.end_ns.saturating_sub(rec.start_ns) as f64);
        }

        let final_tick = tick == self.grid.end_tick();
        let everyone = init || self.cfg.scheme == Scheme::Global;
        if self.cfg.scheme == Scheme::Global && !final_tick {
            self.open_global(tick, m)?;
        }
        for t in 0..n_top {
            if everyone || sets.active[t] {
                let r = self.owner[t] as usize;
                // SAFETY: no task is running
                let s = unsafe { self.ranks[r].slots.slice(0..self.ranks[r].slots.len()) };
                self.tree.refresh_top(t as u32, |i| (s[i].p.h, s[i].p.bin, s[i].p.dx_bound));
            }
        }

        let busy = report.rank_busy_ns(n_ranks);
        let idle = report.rank_idle_ns(n_ranks);
        for (acc, b) in self.busy_since_rebuild.iter_mut().zip(&busy) {
            *acc += b;
        }
        let per_rank = (0..n_ranks)
            .map(|r| RankMetrics {
                busy_ns: busy[r],
                idle_ns: idle[r],
                messages: msg_counts[r],
                bytes: byte_counts[r],
                n_local: (0..n_top).filter(|&t| self.owner[t] as usize == r).map(|t| self.tree.cells[t].count as u64).sum(),
            })
            .collect();
        let metrics = StepMetrics {
            step_index: self.clock.step_index,
            tick,
            time: self.grid.time_of(tick),
            m: (!init).then_some(m),
            n_active,
            n_kicked,
            n_drifted,
            n_pair_interactions,
            n_tasks: g.len() as u64,
            wall_ns: 0,
            rebuild: rebuilt,
            per_rank,
        };

        if final_tick {
            self.done = true;
        } else {
            let min_bin = self.tree.cells[..n_top].iter().map(|c| c.min_bin).min().unwrap_or(EMPTY_BIN);
            if min_bin == EMPTY_BIN {
                self.clock.tick = self.grid.end_tick();
                self.clock.step_index += 1;
            } else {
                self.clock.advance(min_bin, &self.grid);
            }
        }
        if init {
            self.rebuild_pending = true;
        }
        self.initialised = true;
        self.steps_since_rebuild += 1;
        if self.keep_trace {
            self.trace = Some((g, report));
        }
        Ok(StepMetrics { wall_ns: wall.elapsed().as_nanos() as u64, ..metrics })
    }

    /// Global scheme: everyone takes the smallest bin requested this step.
    fn open_global(&mut self, tick: u64, m: u32) -> Result<()> {
        let n_top = self.tree.n_top();
        let mut bin = u8::MAX;
        for t in 0..n_top {
            for s in self.owned(t) {
                bin = bin.min(s.s.target_bin);
            }
        }
        let ctx = StepCtx {
            tick,
            m,
            cfg: &self.cfg.sph,
            grid: &self.grid,
            boxsize: self.boxsize,
            h_cap: self.h_cap,
            forced_bin: self.cfg.forced_bin,
        };
        for t in 0..n_top {
            let r = self.owner[t] as usize;
            // SAFETY: no task is running
            let s = unsafe { self.ranks[r].slots.slice_mut(self.tree.cells[t].range()) };
            for slot in s {
                open_step(slot, bin, &ctx);
            }
        }
        Ok(())
    }
}

/// Everything a task body needs during one step.
struct Env<'a> {
    g: &'a TaskGraph,
    tree: &'a Tree,
    owner: &'a [u16],
    ranks: &'a [RankState],
    ctx: StepCtx<'a>,
    mode: KickMode,
    epoch: u64,
    msgs: HashMap<(u16, u16, u32), &'a MsgSpec>,
    /// Per rank, indexed by `cell * N_DIRS + dir`.
    sorts: Vec<Vec<OnceLock<Vec<SortKey>>>>,
    /// Payloads keyed by the recv task that will consume them.
    mailbox: Mutex<HashMap<u32, Vec<u8>>>,
    channels: Mutex<Channels>,
    clock: &'a Clock,
    drifted: AtomicU64,
    kicked: AtomicU64,
    interactions: AtomicU64,
    messages: Vec<AtomicU64>,
    bytes: Vec<AtomicU64>,
}

impl Env<'_> {
    fn range(&self, c: u32) -> Range<usize> {
        self.tree.cells[c as usize].range()
    }

    fn top(&self, c: u32) -> u32 {
        self.tree.cells[c as usize].top
    }

    fn local(&self, c: u32, rank: usize) -> bool {
        self.owner[self.top(c) as usize] as usize == rank
    }

    /// Foreign cells may only be read once this step's message has landed.
    fn check_proxy(&self, rank: usize, c: u32, phase: Phase) -> Result<()> {
        if self.local(c, rank) {
            return Ok(());
        }
        let top = self.top(c);
        let e = self.ranks[rank].epochs[top as usize][phase as usize].load(Ordering::Acquire);
        if e != self.epoch {
            return Err(mtsph_core::Error::Comm(format!(
                "rank {rank} read proxy cell {c} before its {phase:?} message for this step arrived"
            ))
            .into());
        }
        Ok(())
    }

    fn keys(&self, rank: usize, c: u32, dir: u8) -> Result<&[SortKey]> {
        self.sorts[rank][c as usize * N_DIRS + dir as usize]
            .get()
            .map(Vec::as_slice)
            .ok_or_else(|| mtsph_core::Error::Comm(format!("cell {c} read before its sort along {dir}")).into())
    }

    fn run_task(&self, i: u32) -> Result<Option<(u32, u64)>> {
        let t = &self.g.tasks[i as usize];
        let r = t.rank as usize;
        let slots = &self.ranks[r].slots;
        let ctx = &self.ctx;
        // SAFETY (every unsafe block below): the executor only runs a task
        // while it holds the locks of all cells it touches on its rank.
        match t.kind {
            TaskKind::Drift => {
                let s = unsafe { slots.slice_mut(self.range(t.ci)) };
                self.drifted.fetch_add(drift_cell(s, ctx)?, Ordering::Relaxed);
            }
            TaskKind::Sort => {
                self.check_proxy(r, t.ci, Phase::Positions)?;
                let s = unsafe { slots.slice(self.range(t.ci)) };
                let idx = t.ci as usize * N_DIRS + t.dir as usize;
                if self.sorts[r][idx].set(sort_cell(s, t.dir as usize)).is_err() {
                    return Err(mtsph_core::Error::Comm(format!("cell {} sorted twice", t.ci)).into());
                }
            }
            TaskKind::DensitySelf => {
                let s = unsafe { slots.slice_mut(self.range(t.ci)) };
                let out = density_self(s, ctx);
                apply_density(s, &out.a);
            }
            TaskKind::ForceSelf => {
                let s = unsafe { slots.slice_mut(self.range(t.ci)) };
                let out = force_self(s, ctx);
                self.interactions.fetch_add(out.interactions, Ordering::Relaxed);
                apply_force(s, &out.a);
            }
            TaskKind::DensityPair | TaskKind::ForcePair => self.pair(t, r)?,
            TaskKind::Ghost => {
                let s = unsafe { slots.slice_mut(self.range(t.ci)) };
                ghost(s, ctx)?;
            }
            TaskKind::Kick => {
                let s = unsafe { slots.slice_mut(self.range(t.ci)) };
                let st = kick_cell(s, ctx, self.mode)?;
                self.kicked.fetch_add(st.kicked, Ordering::Relaxed);
            }
            TaskKind::Send => return self.send(t, r).map(Some),
            TaskKind::Recv => self.recv(i, t, r)?,
        }
        Ok(None)
    }

    fn pair(&self, t: &Task, r: usize) -> Result<()> {
        let density = t.kind == TaskKind::DensityPair;
        let phase = if density { Phase::Positions } else { Phase::Density };
        let (a, b) = (t.ci, t.cj);
        self.check_proxy(r, a, phase)?;
        self.check_proxy(r, b, phase)?;
        let slots = &self.ranks[r].slots;
        let (ra, rb) = (self.range(a), self.range(b));
        let same = a == b;
        let (out_d, out_f) = {
            let (sa, sb) = unsafe { (slots.slice(ra.clone()), slots.slice(rb.clone())) };
            let view = PairView {
                a: sa,
                b: sb,
                same,
                keys_a: self.keys(r, a, t.dir)?,
                keys_b: self.keys(r, b, t.dir)?,
                shift: self.tree.shift_vec(t.shift),
                dir: t.dir as usize,
                reach: t.reach,
                write_a: self.local(a, r),
                write_b: self.local(b, r),
            };
            if density {
                (Some(density_pair(&view, &self.ctx)), None)
            } else {
                (None, Some(force_pair(&view, &self.ctx)))
            }
        };
        let sa = unsafe { slots.slice_mut(ra) };
        if let Some(out) = out_d {
            apply_density(sa, &out.a);
            if same {
                apply_density(sa, &out.b);
            } else {
                apply_density(unsafe { slots.slice_mut(rb.clone()) }, &out.b);
            }
        }
        if let Some(out) = out_f {
            self.interactions.fetch_add(out.interactions, Ordering::Relaxed);
            apply_force(sa, &out.a);
            if same {
                apply_force(sa, &out.b);
            } else {
                apply_force(unsafe { slots.slice_mut(rb) }, &out.b);
            }
        }
        Ok(())
    }

    fn spec(&self, src: usize, dest: usize, top: u32) -> Result<&MsgSpec> {
        self.msgs
            .get(&(src as u16, dest as u16, top))
            .copied()
            .ok_or_else(|| mtsph_core::Error::Comm(format!("no message planned from {src} to {dest} for cell {top}")).into())
    }

    fn send(&self, t: &Task, r: usize) -> Result<(u32, u64)> {
        let spec = self.spec(r, t.peer as usize, t.ci)?;
        let slots = &self.ranks[r].slots;
        let parts = spec.cells.iter().flat_map(|&c| unsafe { slots.slice(self.range(c)) });
        let (src, dest, cell) = (r as u32, t.peer as u32, t.ci as u64);
        let buf = match t.phase {
            Phase::Positions => {
                let recs: Vec<PositionRecord> = parts
                    .map(|s| PositionRecord { id: s.p.id, pos: s.p.pos.0, v_pred: s.p.v_pred.0, mass: s.p.mass })
                    .collect();
                encode_positions(src, dest, cell, &recs)
            }
            Phase::Density => {
                let recs: Vec<DensityRecord> = parts
                    .map(|s| DensityRecord { h: s.p.h, rho: s.p.rho, u_pred: s.p.u_pred, bin: s.p.bin as u32, flags: s.p.flags })
                    .collect();
                encode_density(src, dest, cell, &recs)
            }
        };
        let deliver = self.channels.lock().unwrap().deliver(r as u16, t.peer, self.clock.now_ns(), buf.len());
        self.messages[r].fetch_add(1, Ordering::Relaxed);
        self.bytes[r].fetch_add(buf.len() as u64, Ordering::Relaxed);
        self.mailbox.lock().unwrap().insert(t.partner, buf);
        Ok((t.partner, deliver))
    }

    fn recv(&self, i: u32, t: &Task, r: usize) -> Result<()> {
        let comm = |s: String| -> Error { mtsph_core::Error::Comm(s).into() };
        let buf = self.mailbox.lock().unwrap().remove(&i).ok_or_else(|| comm(format!("recv task {i} found no message")))?;
        let spec = self.spec(t.peer as usize, r, t.ci)?;
        let slots = &self.ranks[r].slots;
        let targets = spec.cells.iter().flat_map(|&c| self.range(c));
        let header_ok = |src: u32, dest: u32, cell: u64, n: usize| {
            if src != t.peer as u32 || dest != r as u32 || cell != t.ci as u64 || n != spec.count as usize {
                Err(comm(format!("message for cell {} from {} to {r} has a mismatched header", t.ci, t.peer)))
            } else {
                Ok(())
            }
        };
        match t.phase {
            Phase::Positions => {
                let (h, recs) = decode_positions(&buf)?;
                header_ok(h.src, h.dest, h.cell_id, recs.len())?;
                for (k, rec) in targets.zip(recs) {
                    let p = &mut unsafe { slots.slice_mut(k..k + 1) }[0].p;
                    p.id = rec.id;
                    p.pos = Vec3(rec.pos);
                    p.v_pred = Vec3(rec.v_pred);
                    p.mass = rec.mass;
                }
            }
            Phase::Density => {
                let (h, recs) = decode_density(&buf)?;
                header_ok(h.src, h.dest, h.cell_id, recs.len())?;
                for (k, rec) in targets.zip(recs) {
                    let p = &mut unsafe { slots.slice_mut(k..k + 1) }[0].p;
                    p.h = rec.h;
                    p.rho = rec.rho;
                    p.u_pred = rec.u_pred;
                    p.bin = rec.bin as u8;
                    p.flags = rec.flags;
                }
            }
        }
        self.ranks[r].epochs[t.ci as usize][t.phase as usize].store(self.epoch, Ordering::Release);
        Ok(())
    }
}
