//! Side-by-side runs of the integration schemes and of the decomposition
//! strategies on identical initial conditions.

use std::fmt::Write as _;

use mtsph_core::decomp::{evaluate_partition, Partition, Strategy};
use mtsph_core::time::Scheme;

use crate::metrics::{totals, Totals};
use crate::scenario::Ics;
use crate::sim::{Decomp, Sim, SimConfig, StepMetrics};
use crate::Result;

#[derive(Clone, Debug)]
pub struct SchemeRow {
    pub scheme: Scheme,
    pub totals: Totals,
}

#[derive(Clone, Debug)]
pub struct SchemeComparison {
    pub rows: Vec<SchemeRow>,
    /// Bins after the initial force step, taken from a multi-step scheme
    /// when one is run (the global scheme puts everyone in one bin).
    pub initial_histogram: Vec<u64>,
}

impl SchemeComparison {
    pub fn get(&self, scheme: Scheme) -> Option<&Totals> {
        self.rows.iter().find(|r| r.scheme == scheme).map(|r| &r.totals)
    }

    pub fn occupied_bins(&self) -> usize {
        self.initial_histogram.iter().filter(|&&c| c > 0).count()
    }

    /// Total updates under the global scheme over those under drift-active.
    pub fn update_ratio(&self) -> Option<f64> {
        let g = self.get(Scheme::Global)?.updates() as f64;
        let a = self.get(Scheme::DriftActive)?.updates() as f64;
        (a > 0.0).then(|| g / a)
    }

    /// Expected orderings that do not hold: drifts and interactions
    /// drift-active <= drift-all <= global, kicks equal for drift-all and
    /// drift-active.
    pub fn ordering_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let (Some(g), Some(all), Some(act)) =
            (self.get(Scheme::Global), self.get(Scheme::DriftAll), self.get(Scheme::DriftActive))
        else {
            return vec!["all three schemes are needed for the ordering checks".into()];
        };
        let mut check = |what: &str, a: u64, b: u64, c: u64| {
            if !(a <= b && b <= c) {
                out.push(format!("{what}: drift-active {a}, drift-all {b}, global {c} not ascending"));
            }
        };
        check("drifts", act.drifts, all.drifts, g.drifts);
        check("interactions", act.interactions, all.interactions, g.interactions);
        if act.kicks != all.kicks {
            out.push(format!("kicks differ: drift-active {}, drift-all {}", act.kicks, all.kicks));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("scheme,steps,kicks,drifts,updates,interactions,wall_ns\n");
        for r in &self.rows {
            let t = &r.totals;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.scheme.name(),
                t.steps,
                t.kicks,
                t.drifts,
                t.updates(),
                t.interactions,
                t.wall_ns
            );
        }
        s
    }
}

/// Run `steps` steps of each scheme from the same initial conditions.
pub fn compare_schemes(ics: &Ics, base: &SimConfig, schemes: &[Scheme], steps: u64) -> Result<SchemeComparison> {
    let mut rows = Vec::new();
    let mut initial_histogram = Vec::new();
    let mut from_global = true;
    for &scheme in schemes {
        let cfg = SimConfig { scheme, ..base.clone() };
        let mut sim = Sim::new(cfg, ics.particles.clone(), ics.boxsize)?;
        let mut run = Vec::with_capacity(steps as usize);
        if steps > 0 && !sim.is_done() {
            run.push(sim.step()?);
            if initial_histogram.is_empty() || (from_global && scheme != Scheme::Global) {
                initial_histogram = sim.bin_histogram();
                from_global = scheme == Scheme::Global;
            }
        }
        run.extend(sim.run_steps(steps.saturating_sub(1))?);
        log::info!("{}: {} steps", scheme.name(), run.len());
        rows.push(SchemeRow { scheme, totals: totals(&run) });
    }
    Ok(SchemeComparison { rows, initial_histogram })
}

#[derive(Clone, Debug)]
pub struct DecompRow {
    pub decomp: Decomp,
    pub totals: Totals,
    /// Messages summed over steps with fewer active particles than the
    /// comparison's threshold.
    pub small_step_messages: u64,
    /// Edge cut and imbalance of the final assignment, measured on the
    /// costs_time cell graph of the final state.
    pub edge_cut: f64,
    pub imbalance: f64,
    pub repartitions: u64,
}

#[derive(Clone, Debug)]
pub struct DecompComparison {
    pub ranks: usize,
    pub small_threshold: u64,
    pub rows: Vec<DecompRow>,
}

impl DecompComparison {
    pub fn get(&self, d: Decomp) -> Option<&DecompRow> {
        self.rows.iter().find(|r| r.decomp == d)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "decomp,ranks,steps,messages,bytes,small_step_messages,edge_cut,imbalance,repartitions,wall_ns\n",
        );
        for r in &self.rows {
            let t = &r.totals;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.decomp.name(),
                self.ranks,
                t.steps,
                t.messages,
                t.bytes,
                r.small_step_messages,
                r.edge_cut,
                r.imbalance,
                r.repartitions,
                t.wall_ns
            );
        }
        s
    }
}

/// Messages on steps with fewer than `threshold` active particles.
pub fn small_step_messages(steps: &[StepMetrics], threshold: u64) -> u64 {
    steps.iter().filter(|s| s.n_active < threshold).map(|s| s.messages()).sum()
}

/// Run `steps` steps under each decomposition from the same initial
/// conditions.
pub fn compare_decomp(
    ics: &Ics,
    base: &SimConfig,
    decomps: &[Decomp],
    steps: u64,
    small_threshold: u64,
) -> Result<DecompComparison> {
    let mut rows = Vec::new();
    for &decomp in decomps {
        let cfg = SimConfig { decomp, ..base.clone() };
        let mut sim = Sim::new(cfg, ics.particles.clone(), ics.boxsize)?;
        let run = sim.run_steps(steps)?;
        let g = sim.cell_graph(Strategy::CostsTime);
        let p = Partition { assignment: sim.owner().to_vec(), n_ranks: base.ranks };
        let q = evaluate_partition(&g, &p);
        log::info!("{}: {} steps, edge cut {}", decomp.name(), run.len(), q.edge_cut);
        rows.push(DecompRow {
            decomp,
            totals: totals(&run),
            small_step_messages: small_step_messages(&run, small_threshold),
            edge_cut: q.edge_cut,
            imbalance: q.imbalance,
            repartitions: sim.repartitions(),
        });
    }
    Ok(DecompComparison { ranks: base.ranks, small_threshold, rows })
}
