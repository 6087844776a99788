use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use ibn_core::crypto::Timestamp;

/// A monotonic instant paired with the wall-clock time it corresponds to.
/// Protocol cores take this as an argument and never read a clock themselves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Now {
    pub instant: Instant,
    pub wall: Duration,
}

impl Now {
    pub fn system() -> Self {
        Self {
            instant: Instant::now(),
            wall: SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default(),
        }
    }

    pub fn unix(&self) -> u64 {
        self.wall.as_secs()
    }

    pub fn timestamp(&self) -> Timestamp {
        Timestamp::from_unix(self.wall)
    }

    pub fn advance(self, d: Duration) -> Self {
        Self { instant: self.instant + d, wall: self.wall + d }
    }
}

/// Exponential retransmission schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub base: Duration,
    pub factor: u32,
    pub max_tries: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { base: Duration::from_millis(200), factor: 2, max_tries: 5 }
    }
}

impl RetryPolicy {
    /// Delay before the attempt following attempt number `tries` (1-based).
    pub fn delay_after(&self, tries: u32) -> Duration {
        self.base * self.factor.saturating_pow(tries.saturating_sub(1))
    }

    /// Time from the first transmission until the budget is spent.
    pub fn budget(&self) -> Duration {
        (1..=self.max_tries).map(|t| self.delay_after(t)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_schedule() {
        let p = RetryPolicy::default();
        let delays: Vec<_> = (1..=5).map(|t| p.delay_after(t).as_millis()).collect();
        assert_eq!(delays, vec![200, 400, 800, 1600, 3200]);
        assert_eq!(p.budget(), Duration::from_millis(6200));
    }
}
