mod common;

use common::{random_graph, Recorder};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_graphs_run_safely(seed in any::<u64>(), workers in 1usize..=16, ranks in 1usize..=3) {
        let (g, parent) = random_graph(seed, 80, ranks);
        let rec = Recorder::default();
        rec.run(&g, &parent, ranks, workers).unwrap();
        prop_assert_eq!(rec.check(&g, &parent), Ok(()));
    }
}

#[test]
fn recorder_detects_a_forced_overlap() {
    use mtsph_core::task::{Task, TaskGraph, TaskKind};
    let mut g = TaskGraph::default();
    for i in 0..2 {
        let mut t = Task::new(TaskKind::Ghost, i);
        t.locks = vec![0];
        g.add(t);
    }
    let rec = Recorder::default();
    rec.events.lock().unwrap().extend([(0, 0, 3), (1, 1, 2)]);
    assert!(rec.check(&g, &[mtsph_core::tree::NO_CELL]).unwrap_err().contains("overlapped"));
}
