use std::cell::Cell;
use std::time::Instant;

/// Source of elapsed seconds for wall-clock budgets.
pub trait Clock {
    fn elapsed_seconds(&self) -> f64;
}

#[derive(Debug)]
pub struct SystemClock(Instant);

impl SystemClock {
    pub fn start() -> Self {
        SystemClock(Instant::now())
    }
}

impl Clock for SystemClock {
    fn elapsed_seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Advances by a fixed amount on every query; for tests.
#[derive(Debug)]
pub struct ManualClock {
    now: Cell<f64>,
    tick: f64,
}

impl ManualClock {
    pub fn new(tick: f64) -> Self {
        ManualClock { now: Cell::new(0.0), tick }
    }
}

impl Clock for ManualClock {
    fn elapsed_seconds(&self) -> f64 {
        let t = self.now.get();
        self.now.set(t + self.tick);
        t
    }
}
