//! Time sources. All timestamps are UTC.

use chrono::{DateTime, Duration, Utc};
use core::cell::Cell;

pub type Timestamp = DateTime<Utc>;

pub trait Clock {
    fn now(&self) -> Timestamp;
}

impl<C: Clock + ?Sized> Clock for alloc::boxed::Box<C> {
    fn now(&self) -> Timestamp {
        (**self).now()
    }
}

impl<C: Clock + ?Sized> Clock for &C {
    fn now(&self) -> Timestamp {
        (**self).now()
    }
}

/// Always returns the same instant.
#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub Timestamp);

impl Clock for FixedClock {
    fn now(&self) -> Timestamp {
        self.0
    }
}

/// Starts at a fixed instant and advances one second per reading.
///
/// Gives reproducible yet strictly increasing timestamps for scripted runs.
#[derive(Debug, Clone)]
pub struct SteppingClock {
    next: Cell<Timestamp>,
}

impl SteppingClock {
    pub fn new(start: Timestamp) -> Self {
        Self { next: Cell::new(start) }
    }
}

impl Clock for SteppingClock {
    fn now(&self) -> Timestamp {
        let now = self.next.get();
        self.next.set(now + Duration::seconds(1));
        now
    }
}
