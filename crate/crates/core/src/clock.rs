//! Time and resident-set-size sources.
//!
//! The heap never reads the OS directly; it goes through these traits so tests
//! can substitute deterministic providers.

use std::cell::Cell;
use std::rc::Rc;
use std::time::Instant;

/// Monotonic nanosecond clock.
pub trait Clock {
    fn now_ns(&self) -> u64;
}

/// Wall clock backed by [`Instant`], counting from construction.
#[derive(Debug, Clone)]
pub struct MonotonicClock {
    origin: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now_ns(&self) -> u64 {
        self.origin.elapsed().as_nanos() as u64
    }
}

/// A clock that only moves when told to. Clones share the same time.
#[derive(Debug, Clone, Default)]
pub struct ManualClock {
    now: Rc<Cell<u64>>,
}

impl ManualClock {
    pub fn new(start_ns: u64) -> Self {
        Self {
            now: Rc::new(Cell::new(start_ns)),
        }
    }

    pub fn advance(&self, ns: u64) {
        self.now.set(self.now.get() + ns);
    }

    pub fn set(&self, ns: u64) {
        self.now.set(ns);
    }
}

impl Clock for ManualClock {
    fn now_ns(&self) -> u64 {
        self.now.get()
    }
}

/// Deterministic clock that advances by a fixed step on every read.
#[derive(Debug, Clone)]
pub struct TickClock {
    next: Cell<u64>,
    step: u64,
}

impl TickClock {
    pub fn new(step_ns: u64) -> Self {
        Self {
            next: Cell::new(0),
            step: step_ns,
        }
    }
}

impl Clock for TickClock {
    fn now_ns(&self) -> u64 {
        let now = self.next.get();
        self.next.set(now + self.step);
        now
    }
}

/// Source of the process resident set size reported in heap statistics.
pub trait RssSource {
    /// `arena_bytes` is the heap's current arena reservation, available to
    /// providers that cannot query the operating system.
    fn rss_bytes(&self, arena_bytes: u64) -> u64;
}

/// Reads `/proc/self/statm`; falls back to the arena size elsewhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct ProcRss;

const PAGE_SIZE: u64 = 4096;

impl RssSource for ProcRss {
    fn rss_bytes(&self, arena_bytes: u64) -> u64 {
        std::fs::read_to_string("/proc/self/statm")
            .ok()
            .and_then(|s| s.split_whitespace().nth(1)?.parse::<u64>().ok())
            .map(|pages| pages * PAGE_SIZE)
            .unwrap_or(arena_bytes)
    }
}

/// Deterministic provider: reports the arena reservation as the RSS.
#[derive(Debug, Clone, Copy, Default)]
pub struct ArenaRss;

impl RssSource for ArenaRss {
    fn rss_bytes(&self, arena_bytes: u64) -> u64 {
        arena_bytes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manual_clock_is_shared_between_clones() {
        let clock = ManualClock::new(10);
        let view = clock.clone();
        clock.advance(5);
        assert_eq!(view.now_ns(), 15);
    }

    #[test]
    fn tick_clock_advances_per_read() {
        let clock = TickClock::new(7);
        assert_eq!(clock.now_ns(), 0);
        assert_eq!(clock.now_ns(), 7);
    }

    #[test]
    fn arena_rss_echoes_arenas() {
        assert_eq!(ArenaRss.rss_bytes(1234), 1234);
    }
}
