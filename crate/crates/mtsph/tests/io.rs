use mtsph::metrics::{read_jsonl, write_jsonl};
use mtsph::scenario::uniform;
use mtsph::sim::Sim;
use mtsph::snapshot;
use mtsph_core::sph::Particle;
use mtsph_core::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn thousand_random_particles_round_trip_bit_identically() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut f = || {
        let e: i32 = rng.random_range(-300..300);
        rng.random_range(-1.0..1.0) * 10f64.powi(e)
    };
    let ps: Vec<Particle> = (0..1000)
        .map(|i| {
            let mut p = Particle::new(i * 7 + 3, Vec3::new(f(), f(), f()), Vec3::new(f(), f(), f()), f().abs(), f().abs(), f().abs());
            p.rho = f().abs();
            p.bin = (i % 41) as u8;
            p
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    snapshot::write(&path, &ps, Some(5)).unwrap();
    let back = snapshot::read(&path).unwrap();
    assert_eq!(back.len(), ps.len());
    for (a, b) in ps.iter().zip(&back) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.bin, b.bin);
        for (x, y) in [a.pos.0, a.vel.0].concat().iter().zip([b.pos.0, b.vel.0].concat().iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        for (x, y) in [(a.mass, b.mass), (a.h, b.h), (a.u, b.u), (a.rho, b.rho)] {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
    assert_eq!(snapshot::recorded_seed(&std::fs::read_to_string(&path).unwrap()), Some(5));
}

#[test]
fn metrics_stream_round_trips() {
    let ics = uniform(216, 1);
    let mut sim = Sim::new(ics.sim_config(), ics.particles, ics.boxsize).unwrap();
    let steps = sim.run_steps(4).unwrap();
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &steps, Some(1)).unwrap();
    for line in String::from_utf8(buf.clone()).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["seed"], 1);
    }
    assert_eq!(read_jsonl(&buf[..]).unwrap(), steps);
}

#[test]
fn malformed_metrics_line_names_the_line() {
    let good = serde_json::to_string(&mtsph::sim::StepMetrics::default()).unwrap();
    let text = format!("{good}\nnot json\n");
    assert!(matches!(read_jsonl(text.as_bytes()), Err(mtsph::Error::Parse { line: 2, .. })));
}
