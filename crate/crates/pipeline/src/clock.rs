//! Wall and simulated clocks, plus a shutdown signal both can wait on.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use ecg_core::timefmt;

/// Time source shared by ingest, pipeline and simulators.
#[derive(Debug, Clone, Default)]
pub enum Clock {
    #[default]
    System,
    Sim(Arc<SimClock>),
}

/// Manually driven clock. Time only moves when a driver sets or advances it.
#[derive(Debug)]
pub struct SimClock {
    now: Mutex<DateTime<Utc>>,
    moved: Condvar,
}

impl SimClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        SimClock { now: Mutex::new(timefmt::truncate_ms(start)), moved: Condvar::new() }
    }

    pub fn now(&self) -> DateTime<Utc> {
        *self.now.lock().unwrap()
    }

    /// Moves the clock to `t`; earlier times are ignored.
    pub fn set(&self, t: DateTime<Utc>) {
        let mut now = self.now.lock().unwrap();
        let t = timefmt::truncate_ms(t);
        if t > *now {
            *now = t;
        }
        self.moved.notify_all();
    }

    pub fn advance(&self, seconds: f64) {
        let ms = (seconds * 1000.0).round() as i64;
        let t = self.now() + chrono::Duration::milliseconds(ms);
        self.set(t);
    }

    fn wait(&self, timeout: Duration) {
        let guard = self.now.lock().unwrap();
        let _ = self.moved.wait_timeout(guard, timeout).unwrap();
    }
}

impl Clock {
    pub fn simulated(start: DateTime<Utc>) -> Self {
        Clock::Sim(Arc::new(SimClock::new(start)))
    }

    /// Current time at millisecond precision.
    pub fn now(&self) -> DateTime<Utc> {
        match self {
            Clock::System => timefmt::truncate_ms(Utc::now()),
            Clock::Sim(c) => c.now(),
        }
    }

    pub fn sim(&self) -> Option<&Arc<SimClock>> {
        match self {
            Clock::Sim(c) => Some(c),
            Clock::System => None,
        }
    }

    pub fn is_simulated(&self) -> bool {
        matches!(self, Clock::Sim(_))
    }

    /// Blocks until the clock reads at least `t`. Returns false if shutdown
    /// was requested first.
    pub fn sleep_until(&self, t: DateTime<Utc>, shutdown: &Shutdown) -> bool {
        loop {
            if shutdown.is_requested() {
                return false;
            }
            let now = self.now();
            if now >= t {
                return true;
            }
            match self {
                Clock::System => {
                    let left = (t - now).to_std().unwrap_or(Duration::ZERO);
                    if shutdown.wait_timeout(left) {
                        return false;
                    }
                }
                // the driver thread moves sim time; re-check shutdown regularly
                Clock::Sim(c) => c.wait(Duration::from_millis(20)),
            }
        }
    }
}

#[derive(Debug, Default)]
pub struct Shutdown {
    requested: Mutex<bool>,
    cv: Condvar,
}

impl Shutdown {
    pub fn new() -> Arc<Self> {
        Arc::new(Shutdown::default())
    }

    pub fn request(&self) {
        *self.requested.lock().unwrap() = true;
        self.cv.notify_all();
    }

    pub fn is_requested(&self) -> bool {
        *self.requested.lock().unwrap()
    }

    /// Waits up to `d`; true if shutdown was requested.
    pub fn wait_timeout(&self, d: Duration) -> bool {
        let guard = self.requested.lock().unwrap();
        let (guard, _) = self.cv.wait_timeout_while(guard, d, |r| !*r).unwrap();
        *guard
    }
}
