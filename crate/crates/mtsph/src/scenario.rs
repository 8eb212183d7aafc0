//! Initial conditions. Every generator is deterministic for a given seed.

use mtsph_core::sph::Particle;
use mtsph_core::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::sim::SimConfig;
use crate::{Error, Result};

/// Smoothing length giving about 48 weighted neighbours at number density
/// `n`: (4 pi / 3) (2h)^3 n = 48.
pub fn h_for_density(n: f64) -> f64 {
    0.5 * (3.0 * 48.0 / (4.0 * std::f64::consts::PI * n)).cbrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Uniform,
    TwoCluster,
    SodTube,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Uniform => "uniform",
            Kind::TwoCluster => "two_cluster",
            Kind::SodTube => "sod_tube",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoCluster {
    /// Fraction of the particles in the uniform background.
    pub background_fraction: f64,
    /// Width of the Gaussian blobs in box units.
    pub sigma: f64,
    pub u_background: f64,
    /// Peak extra specific energy at the blob centres.
    pub u_hot: f64,
    /// Width of the hot core relative to `sigma`.
    pub hot_width: f64,
}

impl Default for TwoCluster {
    fn default() -> Self {
        TwoCluster { background_fraction: 0.9, sigma: 1.0 / 40.0, u_background: 0.01, u_hot: 20.0, hot_width: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub kind: Kind,
    /// Target particle count before replication (sod_tube has a fixed count).
    pub n: usize,
    pub seed: u64,
    /// Tiles per axis; 1 means no replication.
    pub replicate: usize,
    pub two_cluster: TwoCluster,
}

impl Scenario {
    pub fn new(kind: Kind, n: usize, seed: u64) -> Self {
        Scenario { kind, n, seed, replicate: 1, two_cluster: TwoCluster::default() }
    }

    /// `uniform`, `two_cluster`, `sod_tube`, or `replicated` (a uniform box
    /// tiled twice per axis unless `replicate` says otherwise).
    pub fn parse(name: &str, n: usize, seed: u64) -> Result<Self> {
        let (kind, rep) = match name {
            "uniform" => (Kind::Uniform, 1),
            "two_cluster" => (Kind::TwoCluster, 1),
            "sod_tube" => (Kind::SodTube, 1),
            "replicated" => (Kind::Uniform, 2),
            _ => return Err(Error::Config(format!("unknown scenario `{name}`"))),
        };
        Ok(Scenario { replicate: rep, ..Scenario::new(kind, n, seed) })
    }

    pub fn generate(&self) -> Result<Ics> {
        if self.n == 0 && self.kind != Kind::SodTube {
            return Err(Error::Config("scenario needs at least one particle".into()));
        }
        if self.replicate == 0 {
            return Err(Error::Config("replicate must be at least 1".into()));
        }
        let base = match self.kind {
            Kind::Uniform => uniform(self.n, self.seed),
            Kind::TwoCluster => two_cluster(self.n, self.seed, &self.two_cluster)?,
            Kind::SodTube => sod_tube(),
        };
        Ok(if self.replicate > 1 { base.replicate(self.replicate) } else { base })
    }
}

/// Generated particles plus the run parameters that suit them.
#[derive(Clone, Debug, PartialEq)]
pub struct Ics {
    pub name: String,
    pub particles: Vec<Particle>,
    pub boxsize: Vec3,
    pub top_dims: [usize; 3],
    pub gamma: f64,
    pub t_end: f64,
    pub n_bin: u32,
    pub split_threshold: usize,
}

impl Ics {
    pub fn sim_config(&self) -> SimConfig {
        let mut c = SimConfig {
            t_end: self.t_end,
            n_bin: self.n_bin,
            top_dims: self.top_dims,
            split_threshold: self.split_threshold,
            ..SimConfig::default()
        };
        c.sph.gamma_eos = self.gamma;
        c
    }

    /// Tile the box `k` times along each axis.
    pub fn replicate(&self, k: usize) -> Ics {
        let mut out = self.tile([k, k, k]);
        out.name = format!("{}x{k}", self.name);
        out
    }

    /// Tile the box `counts[a]` times along axis `a`; particle ids of tile
    /// `t` are offset by `t` times the original count.
    pub fn tile(&self, counts: [usize; 3]) -> Ics {
        let n = self.particles.len() as u64;
        let mut particles = Vec::with_capacity(self.particles.len() * counts.iter().product::<usize>());
        let mut tile = 0;
        for ix in 0..counts[0] {
            for iy in 0..counts[1] {
                for iz in 0..counts[2] {
                    let off = Vec3::new(ix as f64 * self.boxsize[0], iy as f64 * self.boxsize[1], iz as f64 * self.boxsize[2]);
                    for p in &self.particles {
                        particles.push(Particle { id: p.id + tile * n, ..Particle::new(p.id, p.pos + off, p.vel, p.mass, p.h, p.u) });
                    }
                    tile += 1;
                }
            }
        }
        let b = self.boxsize;
        Ics {
            name: format!("{}x{}x{}x{}", self.name, counts[0], counts[1], counts[2]),
            particles,
            boxsize: Vec3::new(b[0] * counts[0] as f64, b[1] * counts[1] as f64, b[2] * counts[2] as f64),
            top_dims: [0, 1, 2].map(|a| self.top_dims[a] * counts[a]),
            ..self.clone()
        }
    }
}

fn wrap(p: Vec3, l: Vec3) -> Vec3 {
    let mut w = p.wrap(l);
    for k in 0..3 {
        // rounding can land exactly on the upper face
        if w[k] >= l[k] {
            w[k] = 0.0;
        }
    }
    w
}

/// Jittered cubic lattice of unit density in a unit box, constant energy and
/// small random velocities.
pub fn uniform(n: usize, seed: u64) -> Ics {
    let side = ((n as f64).cbrt().round() as usize).max(1);
    let s = 1.0 / side as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = Vec3::splat(1.0);
    let mass = 1.0 / (side * side * side) as f64;
    let h = 1.05 * h_for_density((side * side * side) as f64);
    let mut particles = Vec::with_capacity(side * side * side);
    for i in 0..side {
        for j in 0..side {
            for k in 0..side {
                let jit = Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
                let pos = wrap((Vec3::new(i as f64, j as f64, k as f64) + Vec3::splat(0.5) + jit) * s, l);
                let vel = Vec3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
                particles.push(Particle::new(particles.len() as u64, pos, vel, mass, h, 1.0));
            }
        }
    }
    let dims = (side / 4).clamp(1, 16);
    Ics {
        name: "uniform".into(),
        particles,
        boxsize: l,
        top_dims: [dims; 3],
        gamma: 5.0 / 3.0,
        t_end: 1.0,
        n_bin: 32,
        split_threshold: 100,
    }
}

/// Blob centres: the quarter points of the box along x.
pub const CLUSTER_CENTRES: [[f64; 3]; 2] = [[0.25, 0.5, 0.5], [0.75, 0.5, 0.5]];

/// Two Gaussian blobs on a cold uniform background, each with a hot core,
/// so the time-steps of core and background differ by orders of magnitude.
pub fn two_cluster(n: usize, seed: u64, c: &TwoCluster) -> Result<Ics> {
    if !(0.0..1.0).contains(&c.background_fraction) || !(c.sigma > 0.0 && c.hot_width > 0.0) || c.u_background <= 0.0 {
        return Err(Error::Config("invalid two_cluster parameters".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = Vec3::splat(1.0);
    let n_bg = ((n as f64) * c.background_fraction).round() as usize;
    let n_blob = (n - n_bg) / 2;
    let total = n_bg + 2 * n_blob;
    let mass = 1.0 / total as f64;
    let normal = Normal::new(0.0, c.sigma).expect("positive sigma");
    let centres = CLUSTER_CENTRES.map(|x| Vec3(x));
    let peak = n_blob as f64 / ((2.0 * std::f64::consts::PI).powf(1.5) * c.sigma.powi(3));
    let number_density = |p: Vec3| {
        let mut d = n_bg as f64;
        for ctr in centres {
            let r2 = (p - ctr).min_image(l).norm2();
            d += peak * (-r2 / (2.0 * c.sigma * c.sigma)).exp();
        }
        d
    };
    let energy = |p: Vec3| {
        let w = c.hot_width * c.sigma;
        let mut u = c.u_background;
        for ctr in centres {
            let r2 = (p - ctr).min_image(l).norm2();
            u += c.u_hot * (-r2 / (2.0 * w * w)).exp();
        }
        u
    };
    let mut pos = Vec::with_capacity(total);
    for _ in 0..n_bg {
        pos.push(Vec3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()));
    }
    for ctr in centres {
        for _ in 0..n_blob {
            let d = Vec3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng));
            pos.push(wrap(ctr + d, l));
        }
    }
    let particles: Vec<Particle> = pos
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let p = wrap(p, l);
            Particle::new(i as u64, p, Vec3::ZERO, mass, 1.2 * h_for_density(number_density(p)), energy(p))
        })
        .collect();
    let h_bg = h_for_density(n_bg.max(1) as f64);
    // the top cell must hold the background kernel with room for growth
    let dims = ((1.0 / (3.5 * h_bg)).floor() as usize).clamp(3, 16);
    Ok(Ics {
        name: "two_cluster".into(),
        particles,
        boxsize: l,
        top_dims: [dims; 3],
        gamma: 5.0 / 3.0,
        t_end: 1.0,
        n_bin: 40,
        split_threshold: 100,
    })
}

pub const SOD_BOX: [f64; 3] = [2.0, 0.12, 0.12];
pub const SOD_SPACING: (f64, f64) = (0.02, 0.04);

/// Quasi one-dimensional shock tube: dense hot gas (rho 1, P 1) in x < 1 and
/// light gas (rho 0.125, P 0.1) in x >= 1, realised with equal-mass
/// particles on lattices of spacing 0.02 and 0.04. The periodic box makes a
/// second, mirrored interface at x = 0.
pub fn sod_tube() -> Ics {
    let gamma = 1.4;
    let l = Vec3(SOD_BOX);
    let mut particles = Vec::new();
    for (x0, rho, p, s) in [(0.0, 1.0, 1.0, SOD_SPACING.0), (1.0, 0.125, 0.1, SOD_SPACING.1)] {
        let nx = (1.0 / s).round() as usize;
        let ny = (l[1] / s).round() as usize;
        let mass = rho * s * s * s;
        let u = p / ((gamma - 1.0) * rho);
        let h = 1.05 * h_for_density(1.0 / (s * s * s));
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..ny {
                    let pos = Vec3::new(x0 + (i as f64 + 0.5) * s, (j as f64 + 0.5) * s, (k as f64 + 0.5) * s);
                    particles.push(Particle::new(particles.len() as u64, pos, Vec3::ZERO, mass, h, u));
                }
            }
        }
    }
    Ics {
        name: "sod_tube".into(),
        particles,
        boxsize: l,
        top_dims: [16, 1, 1],
        gamma,
        t_end: 0.2,
        n_bin: 20,
        split_threshold: 100,
    }
}
