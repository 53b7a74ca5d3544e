//! Sliding-window rate limiter over an injectable clock.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

/// Time source. The virtual implementation lets tests drive the limiter
/// without real sleeps.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
    fn sleep_ms(&self, ms: u64);
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        use std::time::{SystemTime, UNIX_EPOCH};
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or_default()
            .as_millis() as u64
    }
    fn sleep_ms(&self, ms: u64) {
        std::thread::sleep(std::time::Duration::from_millis(ms));
    }
}

/// A clock that only advances when slept on.
#[derive(Default)]
pub struct VirtualClock {
    now: Mutex<u64>,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }
    pub fn advance(&self, ms: u64) {
        *self.now.lock().unwrap() += ms;
    }
}

impl Clock for VirtualClock {
    fn now_ms(&self) -> u64 {
        *self.now.lock().unwrap()
    }
    fn sleep_ms(&self, ms: u64) {
        self.advance(ms);
    }
}

/// Caps requests per minute over a 60-second sliding window.
pub struct RateLimiter {
    max_per_minute: usize,
    clock: Arc<dyn Clock>,
    sent: Mutex<VecDeque<u64>>,
}

impl RateLimiter {
    pub fn new(max_per_minute: usize, clock: Arc<dyn Clock>) -> Self {
        assert!(max_per_minute >= 1);
        Self {
            max_per_minute,
            clock,
            sent: Mutex::new(VecDeque::new()),
        }
    }

    /// Block (via the clock) until a request slot is free, then take it.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut sent = self.sent.lock().unwrap();
                let now = self.clock.now_ms();
                while let Some(&front) = sent.front() {
                    if now.saturating_sub(front) >= 60_000 {
                        sent.pop_front();
                    } else {
                        break;
                    }
                }
                if sent.len() < self.max_per_minute {
                    sent.push_back(now);
                    return;
                }
                // time until the oldest request leaves the window
                60_000 - (now - sent.front().copied().unwrap())
            };
            self.clock.sleep_ms(wait.max(1));
        }
    }
}
