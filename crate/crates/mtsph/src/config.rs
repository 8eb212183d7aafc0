//! Flat `key = value` configuration. Keys name scenario and simulation
//! fields directly; command-line flags override file entries.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use mtsph_core::time::Scheme;

use crate::scenario::{Ics, Scenario};
use crate::sim::{Decomp, SimConfig};
use crate::{Error, Result};

pub const KEYS: &[&str] = &[
    "scenario",
    "n",
    "seed",
    "replicate",
    "steps",
    "scheme",
    "decomp",
    "ranks",
    "workers",
    "t_end",
    "n_bin",
    "top_dims",
    "split_threshold",
    "max_depth",
    "cfl_constant",
    "gamma_eos",
    "visc_alpha",
    "visc_beta",
    "n_ngb_target",
    "h_max",
    "h_tolerance",
    "h_growth",
    "alpha_ns",
    "beta_ns_per_byte",
    "rebuild_every",
    "forced_bin",
    "balance_tol",
    "repartition_threshold",
    "repartition_patience",
    "background_fraction",
    "cluster_sigma",
    "u_background",
    "u_hot",
    "hot_width",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    map: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Settings> {
        let mut s = Settings::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, msg: format!("expected `key = value`, found `{line}`") })?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(Error::Parse { line: i + 1, msg: format!("unknown key `{k}`") });
            }
            s.map.insert(k.to_string(), v.trim().to_string());
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path)?;
        Settings::parse(&text).map_err(|e| match e {
            Error::Parse { line, msg } => Error::Config(format!("{}:{line}: {msg}", path.display())),
            e => e,
        })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        self.map.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn num<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|_| Error::Config(format!("`{key}` has invalid value `{v}`"))))
            .transpose()
    }

    fn apply<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.num(key)? {
            *slot = v;
        }
        Ok(())
    }
}

/// Everything needed to start a run.
#[derive(Clone, Debug)]
pub struct RunSetup {
    pub scenario: Scenario,
    pub ics: Ics,
    pub sim: SimConfig,
    /// Step limit; `None` runs to t_end.
    pub steps: Option<u64>,
}

pub fn resolve(s: &Settings) -> Result<RunSetup> {
    let name = s.get("scenario").unwrap_or("uniform");
    let n = s.num("n")?.unwrap_or(4096);
    let seed = s.num("seed")?.unwrap_or(0);
    let mut scenario = Scenario::parse(name, n, seed)?;
    s.apply("replicate", &mut scenario.replicate)?;
    let tc = &mut scenario.two_cluster;
    s.apply("background_fraction", &mut tc.background_fraction)?;
    s.apply("cluster_sigma", &mut tc.sigma)?;
    s.apply("u_background", &mut tc.u_background)?;
    s.apply("u_hot", &mut tc.u_hot)?;
    s.apply("hot_width", &mut tc.hot_width)?;
    let ics = scenario.generate()?;
    let mut c = ics.sim_config();
    c.seed = seed;
    if let Some(v) = s.get("scheme") {
        c.scheme = Scheme::parse(v).ok_or_else(|| Error::Config(format!("unknown scheme `{v}`")))?;
    }
    if let Some(v) = s.get("decomp") {
        c.decomp = Decomp::parse(v).ok_or_else(|| Error::Config(format!("unknown decomposition `{v}`")))?;
    }
    if let Some(v) = s.get("top_dims") {
        let d: Vec<usize> = v.split(',').map(|x| x.trim().parse()).collect::<std::result::Result<_, _>>().map_err(|_| Error::Config(format!("bad top_dims `{v}`")))?;
        c.top_dims = d.try_into().map_err(|_| Error::Config(format!("top_dims needs three values, got `{v}`")))?;
    }
    if let Some(v) = s.get("forced_bin") {
        c.forced_bin = if v == "none" { None } else { Some(v.parse().map_err(|_| Error::Config(format!("bad forced_bin `{v}`")))?) };
    }
    s.apply("ranks", &mut c.ranks)?;
    s.apply("workers", &mut c.workers)?;
    s.apply("t_end", &mut c.t_end)?;
    s.apply("n_bin", &mut c.n_bin)?;
    s.apply("split_threshold", &mut c.split_threshold)?;
    s.apply("max_depth", &mut c.max_depth)?;
    s.apply("cfl_constant", &mut c.sph.cfl_constant)?;
    s.apply("gamma_eos", &mut c.sph.gamma_eos)?;
    s.apply("visc_alpha", &mut c.sph.visc_alpha)?;
    s.apply("visc_beta", &mut c.sph.visc_beta)?;
    s.apply("n_ngb_target", &mut c.sph.n_ngb_target)?;
    s.apply("h_max", &mut c.sph.h_max)?;
    s.apply("h_tolerance", &mut c.sph.h_tolerance)?;
    s.apply("h_growth", &mut c.sph.h_growth)?;
    s.apply("alpha_ns", &mut c.link.alpha_ns)?;
    s.apply("beta_ns_per_byte", &mut c.link.beta_ns_per_byte)?;
    s.apply("rebuild_every", &mut c.rebuild_every)?;
    s.apply("balance_tol", &mut c.balance_tol)?;
    s.apply("repartition_threshold", &mut c.repartition_threshold)?;
    s.apply("repartition_patience", &mut c.repartition_patience)?;
    c.validate()?;
    Ok(RunSetup { scenario, ics, sim: c, steps: s.num("steps")? })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_override() {
        let mut s = Settings::parse("# comment\nscenario = uniform\nn = 64\nranks=2 # trailing\n").unwrap();
        assert_eq!(s.get("ranks"), Some("2"));
        s.set("workers", 3).unwrap();
        s.set("top_dims", "2,2,2").unwrap();
        let r = resolve(&s).unwrap();
        assert_eq!((r.sim.ranks, r.sim.workers, r.sim.top_dims), (2, 3, [2, 2, 2]));
        assert_eq!(r.ics.particles.len(), 64);
    }

    #[test]
    fn errors_name_the_problem() {
        assert!(matches!(Settings::parse("a = 1\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(Settings::parse("\nranks 2\n"), Err(Error::Parse { line: 2, .. })));
        let mut s = Settings::default();
        s.set("scheme", "fastest").unwrap();
        assert!(matches!(resolve(&s), Err(Error::Config(_))));
        let mut s = Settings::default();
        s.set("ranks", "0").unwrap();
        assert_eq!(resolve(&s).unwrap_err().exit_code(), 2);
    }
}
