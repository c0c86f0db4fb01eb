use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

/// Caps in-flight requests and spaces out request starts.
pub struct Limiter {
    max_in_flight: usize,
    min_interval: Duration,
    state: Mutex<State>,
    freed: Condvar,
}

struct State {
    in_flight: usize,
    next_start: Option<Instant>,
}

pub struct Permit<'a> {
    limiter: &'a Limiter,
}

impl Limiter {
    pub fn new(max_in_flight: usize, min_interval: Duration) -> Self {
        Self {
            max_in_flight: max_in_flight.max(1),
            min_interval,
            state: Mutex::new(State { in_flight: 0, next_start: None }),
            freed: Condvar::new(),
        }
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }

    pub fn in_flight(&self) -> usize {
        self.state.lock().map(|s| s.in_flight).unwrap_or(0)
    }

    /// Blocks until a slot is free and the spacing interval has elapsed.
    pub fn acquire(&self) -> Permit<'_> {
        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        while state.in_flight >= self.max_in_flight {
            state = self.freed.wait(state).unwrap_or_else(|e| e.into_inner());
        }
        state.in_flight += 1;
        let now = Instant::now();
        let start = state.next_start.map_or(now, |t| t.max(now));
        if !self.min_interval.is_zero() {
            state.next_start = Some(start + self.min_interval);
        }
        drop(state);
        let wait = start.saturating_duration_since(now);
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
        Permit { limiter: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut state = self.limiter.state.lock().unwrap_or_else(|e| e.into_inner());
        state.in_flight -= 1;
        drop(state);
        self.limiter.freed.notify_one();
    }
}
