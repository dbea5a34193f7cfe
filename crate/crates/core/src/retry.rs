//! Bounded exponential backoff for network-facing clients.

use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backoff {
    /// Total attempts including the first one.
    pub max_attempts: u32,
    pub initial_delay: Duration,
    pub max_delay: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Backoff {
            max_attempts: 4,
            initial_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl Backoff {
    /// No sleeping between attempts; used by tests and mocks.
    pub fn immediate(max_attempts: u32) -> Self {
        Backoff {
            max_attempts,
            initial_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    /// Delay before retry number `retry` (1-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry.saturating_sub(1)).unwrap_or(u32::MAX);
        self.initial_delay.saturating_mul(factor).min(self.max_delay)
    }

    /// Runs `op` until it succeeds or attempts run out. Returns the last
    /// error together with the number of attempts made.
    pub fn run<T, E>(&self, mut op: impl FnMut(u32) -> Result<T, E>) -> Result<(T, u32), (E, u32)> {
        let attempts = self.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            match op(attempt) {
                Ok(value) => return Ok((value, attempt)),
                Err(err) if attempt >= attempts => return Err((err, attempt)),
                Err(_) => {
                    let delay = self.delay(attempt);
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                    attempt += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delays_double_and_cap() {
        let b = Backoff {
            max_attempts: 10,
            initial_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(500),
        };
        assert_eq!(b.delay(1), Duration::from_millis(100));
        assert_eq!(b.delay(2), Duration::from_millis(200));
        assert_eq!(b.delay(3), Duration::from_millis(400));
        assert_eq!(b.delay(4), Duration::from_millis(500));
        assert_eq!(b.delay(40), Duration::from_millis(500));
    }

    #[test]
    fn stops_after_max_attempts() {
        let mut calls = 0;
        let out: Result<((), u32), (&str, u32)> = Backoff::immediate(3).run(|_| {
            calls += 1;
            Err("down")
        });
        assert_eq!(out, Err(("down", 3)));
        assert_eq!(calls, 3);
    }

    #[test]
    fn returns_first_success() {
        let out: Result<(u32, u32), ((), u32)> =
            Backoff::immediate(5).run(|attempt| if attempt == 2 { Ok(7) } else { Err(()) });
        assert_eq!(out, Ok((7, 2)));
    }
}
