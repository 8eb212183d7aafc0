use alloc::collections::BTreeMap;

use crate::task::graph::TaskKind;

/// Nanoseconds per unit of static work before anything was measured.
pub const STATIC_NS_PER_UNIT: f64 = 1.0;

/// Exponential moving average of measured task costs per (kind, size
/// bucket), with a static work model as fallback. The fallback is scaled by
/// the measured nanoseconds per work unit so that measured and unmeasured
/// buckets stay comparable.
#[derive(Clone, Debug)]
pub struct CostModel {
    pub decay: f64,
    ema: BTreeMap<(TaskKind, u8), f64>,
    unit_ns: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel { decay: 0.5, ema: BTreeMap::new(), unit_ns: STATIC_NS_PER_UNIT }
    }
}

/// Static work: n_i n_j for pairs, n^2 for selfs, n for everything else.
pub fn static_work(kind: TaskKind, na: u32, nb: u32) -> f64 {
    let (a, b) = (na as f64, nb as f64);
    if kind.is_pair() {
        a * b
    } else if kind.is_self() {
        a * a
    } else {
        a
    }
}

fn bucket(work: f64) -> u8 {
    if work < 1.0 {
        0
    } else {
        (libm::log2(work) as u8).saturating_add(1)
    }
}

impl CostModel {
    pub fn estimate(&self, kind: TaskKind, na: u32, nb: u32) -> f64 {
        let w = static_work(kind, na, nb);
        match self.ema.get(&(kind, bucket(w))) {
            Some(&e) => e,
            None => w * self.unit_ns,
        }
    }

    pub fn record(&mut self, kind: TaskKind, na: u32, nb: u32, measured_ns: f64) {
        let w = static_work(kind, na, nb);
        let key = (kind, bucket(w));
        let d = self.decay;
        if w >= 1.0 {
            let first = self.ema.is_empty();
            let r = measured_ns / w;
            self.unit_ns = if first { r } else { 0.99 * self.unit_ns + 0.01 * r };
        }
        self.ema.entry(key).and_modify(|e| *e = d * *e + (1.0 - d) * measured_ns).or_insert(measured_ns);
    }

    pub fn has_history(&self) -> bool {
        !self.ema.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_pair_costs_nothing() {
        assert_eq!(CostModel::default().estimate(TaskKind::DensityPair, 0, 0), 0.0);
    }

    #[test]
    fn static_model_shapes() {
        let c = CostModel::default();
        assert_eq!(c.estimate(TaskKind::ForcePair, 3, 5), 15.0);
        assert_eq!(c.estimate(TaskKind::DensitySelf, 4, 0), 16.0);
        assert_eq!(c.estimate(TaskKind::Kick, 7, 0), 7.0);
    }

    #[test]
    fn constant_measurements_converge() {
        let mut c = CostModel::default();
        for _ in 0..60 {
            c.record(TaskKind::Ghost, 100, 0, 250.0);
        }
        assert_eq!(c.estimate(TaskKind::Ghost, 100, 0), 250.0);
        // other buckets keep the static model, rescaled to 2.5 ns per unit
        assert!((c.estimate(TaskKind::Ghost, 1000, 0) - 2500.0).abs() < 1e-9);
    }

    #[test]
    fn alternating_measurements_reach_ema_limit_cycle() {
        // x' = (x + v) / 2 alternating a, b has the 2-cycle
        // x_a = (2a + b) / 3 after an a, x_b = (a + 2b) / 3 after a b
        let (a, b) = (90.0, 30.0);
        let mut c = CostModel::default();
        for _ in 0..40 {
            c.record(TaskKind::Sort, 50, 0, a);
            c.record(TaskKind::Sort, 50, 0, b);
        }
        let x = c.estimate(TaskKind::Sort, 50, 0);
        assert!((x - (a + 2.0 * b) / 3.0).abs() < 1e-9);
        c.record(TaskKind::Sort, 50, 0, a);
        let x = c.estimate(TaskKind::Sort, 50, 0);
        assert!((x - (2.0 * a + b) / 3.0).abs() < 1e-9);
    }
}
