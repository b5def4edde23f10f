//! Per-originator admission control for new documents.

/// Token bucket with a discrete refill at each window boundary, so that at
/// most `capacity` documents are admitted in any one window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenBucket {
    capacity: u32,
    refill: u32,
    window_ms: u64,
    tokens: u32,
    window: u64,
}

impl TokenBucket {
    pub fn new(capacity: u32, refill: u32, window_ms: u64, now: u64) -> Self {
        TokenBucket {
            capacity,
            refill,
            window_ms: window_ms.max(1),
            tokens: capacity,
            window: now / window_ms.max(1),
        }
    }

    fn advance(&mut self, now: u64) {
        let w = now / self.window_ms;
        if w > self.window {
            let elapsed = (w - self.window).min(u64::from(u32::MAX)) as u32;
            self.tokens = self
                .capacity
                .min(self.tokens.saturating_add(self.refill.saturating_mul(elapsed)));
            self.window = w;
        }
    }

    pub fn available(&mut self, now: u64) -> u32 {
        self.advance(now);
        self.tokens
    }

    /// Takes a token if one is left.
    pub fn try_take(&mut self, now: u64) -> bool {
        self.advance(now);
        if self.tokens == 0 {
            return false;
        }
        self.tokens -= 1;
        true
    }

    pub fn window_of(&self, now: u64) -> u64 {
        now / self.window_ms
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eleventh_document_in_a_window_is_deferred() {
        let mut b = TokenBucket::new(10, 10, 60_000, 0);
        for i in 0..10 {
            assert!(b.try_take(i * 100), "take {i}");
        }
        assert!(!b.try_take(59_999));
        assert!(b.try_take(60_000));
    }

    #[test]
    fn refill_is_capped() {
        let mut b = TokenBucket::new(10, 3, 1000, 0);
        for _ in 0..10 {
            b.try_take(0);
        }
        assert_eq!(b.available(1000), 3);
        assert_eq!(b.available(2500), 6);
        assert_eq!(b.available(100_000), 10);
    }
}
