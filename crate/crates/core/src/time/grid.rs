use crate::{Error, Result};

/// Power-of-two discretisation of the run interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub t_begin: f64,
    pub t_end: f64,
    pub n_bin: u32,
}

impl TimeGrid {
    pub fn new(t_begin: f64, t_end: f64, n_bin: u32) -> Result<Self> {
        if !(t_end > t_begin) {
            return Err(Error::Config(alloc::format!("t_end {t_end} must exceed t_begin {t_begin}")));
        }
        if !(1..=62).contains(&n_bin) {
            return Err(Error::Config(alloc::format!("n_bin {n_bin} outside [1, 62]")));
        }
        Ok(TimeGrid { t_begin, t_end, n_bin })
    }

    /// Duration of one tick, t_min = t_run / 2^N_bin.
    #[inline]
    pub fn tick_duration(&self) -> f64 {
        libm::ldexp(self.t_end - self.t_begin, -(self.n_bin as i32))
    }

    #[inline]
    pub fn end_tick(&self) -> u64 {
        1u64 << self.n_bin
    }

    /// Step length of bin `n`.
    #[inline]
    pub fn bin_dt(&self, n: u8) -> f64 {
        libm::ldexp(self.tick_duration(), n as i32)
    }

    #[inline]
    pub fn time_of(&self, tick: u64) -> f64 {
        self.t_begin + tick as f64 * self.tick_duration()
    }

    /// Largest n with 2^n t_min <= dt, clamped to N_bin.
    pub fn assign_bin(&self, dt: f64) -> Result<u8> {
        let t_min = self.tick_duration();
        if dt.is_nan() || dt < t_min {
            return Err(Error::StepTooSmall { dt, t_min });
        }
        if dt.is_infinite() {
            return Ok(self.n_bin as u8);
        }
        let ratio = dt / t_min;
        let (_, e) = libm::frexp(ratio);
        // frexp gives ratio = f * 2^e with f in [0.5, 1)
        let n = (e - 1).clamp(0, self.n_bin as i32);
        Ok(n as u8)
    }
}

/// m = number of trailing zero bits of `tick`; bins n <= m are active.
#[inline]
pub fn max_active_bin(tick: u64) -> u32 {
    debug_assert!(tick > 0, "tick 0 is initialisation, not a step");
    tick.trailing_zeros()
}

/// Bin a particle may take at `tick` when its time-step asks for `target`:
/// moving to a longer step is only allowed once the tick is divisible by it.
#[inline]
pub fn aligned_bin(target: u8, tick: u64, n_bin: u32) -> u8 {
    let limit = if tick == 0 { n_bin } else { tick.trailing_zeros().min(n_bin) };
    target.min(limit as u8)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepClock {
    pub tick: u64,
    pub step_index: u64,
}

impl StepClock {
    /// Advance by one step of the smallest occupied bin.
    pub fn advance(&mut self, min_bin: u8, grid: &TimeGrid) {
        let next = self.tick + (1u64 << min_bin);
        debug_assert!(next <= grid.end_tick());
        debug_assert!(self.tick % (1u64 << min_bin) == 0, "tick {} not aligned to bin {min_bin}", self.tick);
        self.tick = next;
        self.step_index += 1;
    }

    pub fn finished(&self, grid: &TimeGrid) -> bool {
        self.tick >= grid.end_tick()
    }
}
