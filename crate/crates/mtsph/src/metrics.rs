//! Metrics output (JSON lines) and the summary statistics computed from it.

use std::io::{BufRead, Write};

use serde::Serialize;

use crate::sim::StepMetrics;
use crate::{Error, Result};

#[derive(Serialize)]
struct Record<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(flatten)]
    step: &'a StepMetrics,
}

/// One JSON object per step; `seed`, if given, is added to every line.
pub fn write_jsonl(mut out: impl Write, steps: &[StepMetrics], seed: Option<u64>) -> Result<()> {
    for step in steps {
        serde_json::to_writer(&mut out, &Record { seed, step }).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(input: impl BufRead) -> Result<Vec<StepMetrics>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?);
    }
    Ok(out)
}

/// Least-squares line `y = a + b x` and its coefficient of determination.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub r2: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit { intercept: my - slope * mx, slope, r2 })
}

/// Totals over a run.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Totals {
    pub steps: u64,
    pub kicks: u64,
    pub drifts: u64,
    pub interactions: u64,
    pub messages: u64,
    pub bytes: u64,
    pub wall_ns: u64,
}

impl Totals {
    /// Particle updates: kicks plus drifts.
    pub fn updates(&self) -> u64 {
        self.kicks + self.drifts
    }
}

pub fn totals(steps: &[StepMetrics]) -> Totals {
    let mut t = Totals::default();
    for s in steps {
        t.steps += 1;
        t.kicks += s.n_kicked;
        t.drifts += s.n_drifted;
        t.interactions += s.n_pair_interactions;
        t.messages += s.messages();
        t.bytes += s.bytes();
        t.wall_ns += s.wall_ns;
    }
    t
}

/// Kicks expected over `period` ticks from a bin histogram: a particle in
/// bin `n` is kicked `period / 2^n` times.
pub fn expected_kicks(histogram: &[u64], period: u64) -> u64 {
    histogram.iter().enumerate().map(|(n, &c)| c * (period >> n)).sum()
}
