//! Command-line harness: runs, scheme and decomposition comparisons, initial
//! condition generation and the shock-tube validation.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mtsph::compare::{compare_decomp, compare_schemes};
use mtsph::config::{resolve, RunSetup, Settings};
use mtsph::metrics::{self, totals};
use mtsph::sim::{Decomp, Sim};
use mtsph::validate::run_sod;
use mtsph::{snapshot, Error, Result};
use mtsph_core::decomp::Strategy;
use mtsph_core::time::Scheme;

#[derive(Parser)]
#[command(name = "mtsph", version, about = "Multi-time-stepping SPH with simulated ranks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one simulation and write metrics and the final snapshot.
    Run {
        #[command(flatten)]
        common: Common,
        /// Also write the task trace of the last step.
        #[arg(long)]
        trace: bool,
    },
    /// Run global, drift-all and drift-active on the same initial conditions.
    CompareSchemes {
        #[command(flatten)]
        common: Common,
    },
    /// Run the grid and graph decompositions on the same initial conditions.
    CompareDecomp {
        #[command(flatten)]
        common: Common,
        /// Comma-separated decompositions to compare.
        #[arg(long, default_value = "grid,none_none,costs_costs,none_costs,costs_time")]
        decomps: String,
        /// Steps with fewer active particles count as small steps.
        #[arg(long, default_value_t = 1000)]
        small: u64,
    },
    /// Write the initial conditions of a scenario as a snapshot.
    GenIcs {
        #[command(flatten)]
        common: Common,
    },
    /// Run the shock tube and check it against the exact solution.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Flat key = value configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    /// Particle count for generated scenarios.
    #[arg(long)]
    n: Option<usize>,
    /// global, drift-all or drift-active.
    #[arg(long)]
    scheme: Option<String>,
    /// grid, none_none, costs_costs, none_costs or costs_time.
    #[arg(long)]
    decomp: Option<String>,
    #[arg(long)]
    ranks: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Step limit; without it runs go to t_end.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (file for gen-ics).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Extra `key=value` settings.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn settings(&self) -> Result<Settings> {
        let mut s = match &self.config {
            Some(p) => Settings::load(p)?,
            None => Settings::default(),
        };
        let flags: [(&str, Option<String>); 8] = [
            ("scenario", self.scenario.clone()),
            ("n", self.n.map(|v| v.to_string())),
            ("scheme", self.scheme.clone()),
            ("decomp", self.decomp.clone()),
            ("ranks", self.ranks.map(|v| v.to_string())),
            ("workers", self.workers.map(|v| v.to_string())),
            ("steps", self.steps.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                s.set(k, v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("`{kv}` is not key=value")))?;
            s.set(k.trim(), v.trim())?;
        }
        Ok(s)
    }

    fn setup(&self) -> Result<RunSetup> {
        resolve(&self.settings()?)
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.output.clone().unwrap_or_else(|| PathBuf::from("out"));
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_csv(path: &Path, seed: u64, body: &str) -> Result<()> {
    let mut f = create(path)?;
    writeln!(f, "# seed={seed}")?;
    f.write_all(body.as_bytes())?;
    f.flush()?;
    Ok(())
}

fn cmd_run(common: &Common, trace: bool) -> Result<()> {
    let setup = common.setup()?;
    let dir = common.out_dir()?;
    let seed = setup.sim.seed;
    let mut sim = Sim::new(setup.sim, setup.ics.particles, setup.ics.boxsize)?;
    sim.set_trace(trace);
    let mut out = create(&dir.join("metrics.jsonl"))?;
    let mut steps = Vec::new();
    let mut io_err = None;
    let mut on_step = |m: &mtsph::sim::StepMetrics| {
        if io_err.is_none() {
            io_err = metrics::write_jsonl(&mut out, std::slice::from_ref(m), Some(seed)).err();
        }
    };
    match setup.steps {
        Some(n) => {
            for _ in 0..n {
                if sim.is_done() {
                    break;
                }
                let m = sim.step()?;
                on_step(&m);
                steps.push(m);
            }
        }
        None => steps = sim.run_to_end(&mut on_step)?,
    }
    if let Some(e) = io_err {
        return Err(e);
    }
    out.flush()?;
    snapshot::write(&dir.join("snapshot.csv"), &sim.particles(), Some(seed))?;
    if let Some((g, rep)) = sim.last_trace() {
        let mut f = create(&dir.join("trace.jsonl"))?;
        rep.write_jsonl(g, Some(seed), &mut f)?;
        f.flush()?;
    }
    let t = totals(&steps);
    println!(
        "{} steps to t = {:.6}: {} kicks, {} drifts, {} pair interactions, {} messages ({} bytes), {:.3} s",
        t.steps,
        sim.grid().time_of(sim.clock().tick),
        t.kicks,
        t.drifts,
        t.interactions,
        t.messages,
        t.bytes,
        t.wall_ns as f64 * 1e-9
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_compare_schemes(common: &Common) -> Result<()> {
    let setup = common.setup()?;
    let dir = common.out_dir()?;
    let steps = setup.steps.unwrap_or(512);
    let c = compare_schemes(&setup.ics, &setup.sim, &Scheme::ALL, steps)?;
    let csv = c.to_csv();
    write_csv(&dir.join("schemes.csv"), setup.sim.seed, &csv)?;
    print!("{csv}");
    println!("occupied bins after the first step: {}", c.occupied_bins());
    if let Some(r) = c.update_ratio() {
        println!("global / drift-active updates: {r:.3}");
    }
    let bad = c.ordering_violations();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(bad.join("; ")))
    }
}

fn cmd_compare_decomp(common: &Common, decomps: &str, small: u64) -> Result<()> {
    let setup = common.setup()?;
    let dir = common.out_dir()?;
    let list = decomps
        .split(',')
        .map(|s| Decomp::parse(s.trim()).ok_or_else(|| Error::Config(format!("unknown decomposition `{s}`"))))
        .collect::<Result<Vec<_>>>()?;
    let steps = setup.steps.unwrap_or(128);
    let c = compare_decomp(&setup.ics, &setup.sim, &list, steps, small)?;
    let csv = c.to_csv();
    write_csv(&dir.join("decomp.csv"), setup.sim.seed, &csv)?;
    print!("{csv}");
    if let (Some(g), Some(t)) = (c.get(Decomp::Grid), c.get(Decomp::Graph(Strategy::CostsTime))) {
        println!(
            "small-step messages: grid {}, costs_time {}",
            g.small_step_messages, t.small_step_messages
        );
    }
    Ok(())
}

fn cmd_gen_ics(common: &Common) -> Result<()> {
    let setup = common.setup()?;
    let path = common.output.clone().unwrap_or_else(|| PathBuf::from(format!("{}.csv", setup.ics.name)));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    snapshot::write(&path, &setup.ics.particles, Some(setup.sim.seed))?;
    let b = setup.ics.boxsize;
    println!(
        "{} particles of {} in box {} x {} x {}, wrote {}",
        setup.ics.particles.len(),
        setup.ics.name,
        b[0],
        b[1],
        b[2],
        path.display()
    );
    Ok(())
}

fn cmd_validate(common: &Common) -> Result<()> {
    let workers = common.settings()?.get("workers").map(str::parse).transpose();
    let workers = workers.map_err(|_| Error::Config("workers must be a positive integer".into()))?.unwrap_or(1);
    let r = run_sod(workers)?;
    println!(
        "sod tube: {} steps to t = {}, L1 density error {:.5}, energy drift {:.3e}",
        r.steps, r.t, r.l1, r.energy_drift
    );
    if let Some(dir) = &common.output {
        fs::create_dir_all(dir)?;
        snapshot::write(&dir.join("sod.csv"), &r.particles, None)?;
    }
    r.check()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Run { common, trace } => cmd_run(common, *trace),
        Cmd::CompareSchemes { common } => cmd_compare_schemes(common),
        Cmd::CompareDecomp { common, decomps, small } => cmd_compare_decomp(common, decomps, *small),
        Cmd::GenIcs { common } => cmd_gen_ics(common),
        Cmd::Validate { common } => cmd_validate(common),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
