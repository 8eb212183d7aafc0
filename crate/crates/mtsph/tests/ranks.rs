mod common;

use common::max_rel_diff;
use mtsph::scenario::{uniform, Scenario};
use mtsph::sim::{distribute, proxy_tops, Decomp, Sim, SimConfig};
use mtsph_core::decomp::Strategy;
use mtsph_core::hydro::Slot;
use mtsph_core::sph::Particle;
use mtsph_core::tree::{enumerate_interactions, Reach, Tree, TreeParams};
use mtsph_core::Vec3;
use proptest::prelude::*;

fn final_state(cfg: SimConfig, ics: &mtsph::scenario::Ics, steps: u64) -> Vec<Particle> {
    let mut sim = Sim::new(cfg, ics.particles.clone(), ics.boxsize).unwrap();
    sim.run_steps(steps).unwrap();
    sim.particles()
}

#[test]
fn ranks_do_not_change_the_result() {
    let ics = uniform(1000, 11);
    let base = ics.sim_config();
    let reference = final_state(base.clone(), &ics, 12);
    for (ranks, decomp) in [(2, Decomp::Grid), (2, Decomp::Graph(Strategy::CostsTime)), (4, Decomp::Graph(Strategy::NoneNone))] {
        let got = final_state(SimConfig { ranks, decomp, ..base.clone() }, &ics, 12);
        assert_eq!(max_rel_diff(&reference, &got), 0.0, "R={ranks} {}", decomp.name());
    }
}

#[test]
fn workers_do_not_change_the_result() {
    let ics = Scenario::parse("two_cluster", 3000, 2).unwrap().generate().unwrap();
    let base = ics.sim_config();
    let reference = final_state(base.clone(), &ics, 20);
    for workers in [2, 5] {
        let got = final_state(SimConfig { workers, ranks: 2, ..base.clone() }, &ics, 20);
        assert_eq!(max_rel_diff(&reference, &got), 0.0, "workers={workers}");
    }
}

#[test]
fn single_rank_has_no_proxies_or_messages() {
    let ics = uniform(512, 4);
    let mut sim = Sim::new(ics.sim_config(), ics.particles.clone(), ics.boxsize).unwrap();
    let list = enumerate_interactions(sim.tree(), u32::MAX, Reach::EXACT);
    assert!(proxy_tops(sim.tree(), &list, sim.owner(), 0).is_empty());
    let steps = sim.run_steps(4).unwrap();
    assert!(steps.iter().all(|s| s.messages() == 0 && s.bytes() == 0));
}

#[test]
fn split_pair_gives_one_proxy_each() {
    // two particles in the two top cells of a 2x1x1 grid, close to each other
    let pos = [Vec3::new(0.45, 0.5, 0.5), Vec3::new(0.55, 0.5, 0.5)];
    let params = TreeParams { top_dims: [2, 1, 1], split_threshold: 10, max_depth: 4 };
    let (mut tree, _) = Tree::build(&pos, Vec3::splat(1.0), params).unwrap();
    tree.refresh_all(|_| (0.1, 0, 0.0));
    let list = enumerate_interactions(&tree, u32::MAX, Reach::EXACT);
    let owner = [0u16, 1];
    assert_eq!(proxy_tops(&tree, &list, &owner, 0).into_iter().collect::<Vec<_>>(), [1]);
    assert_eq!(proxy_tops(&tree, &list, &owner, 1).into_iter().collect::<Vec<_>>(), [0]);
}

#[test]
fn orphan_owner_is_rejected() {
    let pos = [Vec3::new(0.25, 0.5, 0.5), Vec3::new(0.75, 0.5, 0.5)];
    let params = TreeParams { top_dims: [2, 1, 1], split_threshold: 10, max_depth: 4 };
    let (tree, _) = Tree::build(&pos, Vec3::splat(1.0), params).unwrap();
    let slots: Vec<Slot> = (0..2).map(|i| Slot::new(Particle::new(i, pos[i as usize], Vec3::ZERO, 1.0, 0.1, 1.0))).collect();
    let err = distribute(&tree, &[0, 3], 2, &slots).unwrap_err();
    assert!(matches!(err, mtsph::Error::Core(mtsph_core::Error::Orphan(1))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// Every particle lands on exactly one rank, unchanged.
    #[test]
    fn distribute_conserves_particles(seed in any::<u64>(), ranks in 1usize..6) {
        let ics = uniform(300, seed % 1000);
        let params = TreeParams { top_dims: [3, 3, 3], split_threshold: 40, max_depth: 6 };
        let pos: Vec<Vec3> = ics.particles.iter().map(|p| p.pos).collect();
        let (tree, perm) = Tree::build(&pos, ics.boxsize, params).unwrap();
        let slots: Vec<Slot> = perm.iter().map(|&i| Slot::new(ics.particles[i as usize].clone())).collect();
        let owner: Vec<u16> = (0..27).map(|t| ((seed >> (t % 60)) as usize % ranks) as u16).collect();
        let per_rank = distribute(&tree, &owner, ranks, &slots).unwrap();
        let mut top_of = vec![0usize; slots.len()];
        for t in 0..27 {
            for i in tree.cells[t].range() {
                top_of[i] = t;
            }
        }
        let mut seen = vec![0u32; slots.len()];
        for (r, v) in per_rank.iter().enumerate() {
            prop_assert_eq!(v.len(), slots.len());
            for (i, s) in v.iter().enumerate() {
                if s.p.id != u64::MAX {
                    prop_assert_eq!(owner[top_of[i]] as usize, r);
                    prop_assert_eq!(&s.p, &slots[i].p);
                    seen[i] += 1;
                }
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }
}
