//! Particle snapshots as CSV with a fixed header. Floats are written with
//! Rust's shortest round-trip formatting, so reading a written file gives
//! back the same bits.

use std::fmt::Write as _;
use std::path::Path;

use mtsph_core::sph::Particle;
use mtsph_core::Vec3;

use crate::{Error, Result};

pub const HEADER: &str = "id,x,y,z,vx,vy,vz,m,h,u,rho,bin";
const FIELDS: usize = 12;

/// Render particles as snapshot text. `seed`, when given, is recorded in a
/// leading `#` comment line.
pub fn to_string(particles: &[Particle], seed: Option<u64>) -> String {
    let mut s = String::with_capacity(64 + particles.len() * 200);
    if let Some(seed) = seed {
        let _ = writeln!(s, "# seed={seed}");
    }
    s.push_str(HEADER);
    s.push('\n');
    for p in particles {
        let _ = writeln!(
            s,
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{}",
            p.id, p.pos[0], p.pos[1], p.pos[2], p.vel[0], p.vel[1], p.vel[2], p.mass, p.h, p.u, p.rho, p.bin
        );
    }
    s
}

pub fn parse(text: &str) -> Result<Vec<Particle>> {
    let bad = |line: usize, msg: String| Error::Parse { line, msg };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r'))).filter(|(_, l)| !l.starts_with('#'));
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        Some((n, _)) => return Err(bad(n, format!("expected header `{HEADER}`"))),
        None => return Err(bad(1, "missing header".into())),
    }
    let mut out = Vec::new();
    for (n, l) in lines {
        if l.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = l.split(',').map(str::trim).collect();
        if f.len() != FIELDS {
            return Err(bad(n, format!("expected {FIELDS} fields, found {}", f.len())));
        }
        let num = |k: usize| -> Result<f64> { f[k].parse().map_err(|_| bad(n, format!("field {k} `{}` is not a number", f[k]))) };
        let id: u64 = f[0].parse().map_err(|_| bad(n, format!("bad id `{}`", f[0])))?;
        let bin: u8 = f[11].parse().map_err(|_| bad(n, format!("bad bin `{}`", f[11])))?;
        let mut p = Particle::new(id, Vec3::new(num(1)?, num(2)?, num(3)?), Vec3::new(num(4)?, num(5)?, num(6)?), num(7)?, num(8)?, num(9)?);
        p.rho = num(10)?;
        p.bin = bin;
        out.push(p);
    }
    Ok(out)
}

/// Seed recorded in a `# seed=` comment, if any.
pub fn recorded_seed(text: &str) -> Option<u64> {
    text.lines().take_while(|l| l.starts_with('#')).find_map(|l| l.strip_prefix("# seed=")?.trim().parse().ok())
}

pub fn write(path: &Path, particles: &[Particle], seed: Option<u64>) -> Result<()> {
    std::fs::write(path, to_string(particles, seed))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Vec<Particle>> {
    parse(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_set_is_header_only() {
        assert_eq!(to_string(&[], None), format!("{HEADER}\n"));
        assert!(parse(&to_string(&[], Some(3))).unwrap().is_empty());
    }

    #[test]
    fn eleven_fields_name_the_line() {
        let text = format!("{HEADER}\n1,0,0,0,0,0,0,1,1,1,1,0\n2,0,0,0,0,0,0,1,1,1,1\n");
        match parse(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn seed_comment_round_trips() {
        assert_eq!(recorded_seed(&to_string(&[], Some(42))), Some(42));
        assert_eq!(recorded_seed(&to_string(&[], None)), None);
    }

    #[test]
    fn awkward_values_are_exact() {
        let mut p = Particle::new(7, Vec3::new(0.1, 1.0 / 3.0, 5e-324), Vec3::new(-0.0, 1e300, -2.5e-17), 1e-9, 0.03, 0.0);
        p.rho = f64::MIN_POSITIVE;
        p.bin = 31;
        let q = &parse(&to_string(&[p.clone()], None)).unwrap()[0];
        for k in 0..3 {
            assert_eq!(q.pos[k].to_bits(), p.pos[k].to_bits());
            assert_eq!(q.vel[k].to_bits(), p.vel[k].to_bits());
        }
        assert_eq!((q.mass, q.h, q.u, q.rho, q.bin, q.id), (p.mass, p.h, p.u, p.rho, p.bin, p.id));
    }
}
