//! Integer-tick time bins: a hierarchy of particles that change bins at
//! every kick stays on the grid and finishes together.

use mtsph_core::time::{aligned_bin, max_active_bin, StepClock, TimeGrid};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn changing_bins_stay_synchronised(
        n_bin in 4u32..14,
        targets in prop::collection::vec(prop::collection::vec(0u8..14, 1..64), 1..24),
    ) {
        let grid = TimeGrid::new(0.0, 1.0, n_bin).unwrap();
        let cap = n_bin as u8;
        // each particle cycles through its own target bins, one per kick
        let mut bin: Vec<u8> = targets.iter().map(|t| aligned_bin(t[0].min(cap), 0, n_bin)).collect();
        let mut next: Vec<u64> = bin.iter().map(|&b| 1u64 << b).collect();
        let mut kicks = vec![0usize; targets.len()];
        let mut covered = vec![0u64; targets.len()];
        let mut clock = StepClock::default();
        while !clock.finished(&grid) {
            let min_bin = *bin.iter().min().unwrap();
            clock.advance(min_bin, &grid);
            let m = max_active_bin(clock.tick);
            for i in 0..bin.len() {
                prop_assert!(next[i] >= clock.tick);
                if next[i] == clock.tick {
                    prop_assert!(bin[i] as u32 <= m);
                    covered[i] += 1u64 << bin[i];
                    kicks[i] += 1;
                    let t = targets[i][kicks[i] % targets[i].len()].min(cap);
                    let b = aligned_bin(t, clock.tick, n_bin);
                    prop_assert_eq!(clock.tick % (1u64 << b), 0);
                    bin[i] = b;
                    next[i] = clock.tick + (1u64 << b);
                } else {
                    prop_assert!(bin[i] as u32 > m);
                }
            }
        }
        prop_assert_eq!(clock.tick, grid.end_tick());
        prop_assert!(covered.iter().all(|&c| c == grid.end_tick()));
    }

    #[test]
    fn bin_lengths_bracket_the_step(dt in 1e-6f64..2.0, n_bin in 20u32..40) {
        let grid = TimeGrid::new(0.0, 1.0, n_bin).unwrap();
        let b = grid.assign_bin(dt).unwrap();
        prop_assert!(grid.bin_dt(b) <= dt);
        prop_assert!(b as u32 == n_bin || grid.bin_dt(b + 1) > dt);
    }
}
