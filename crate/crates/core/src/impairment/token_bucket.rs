use std::time::Duration;

use crate::error::{Error, Result};

const NANOS_PER_SEC: u128 = 1_000_000_000;

/// Token-bucket shaper. Packets are delayed until enough tokens have
/// accumulated, never dropped.
///
/// Tokens are counted in bit-nanoseconds so that accrual
/// `rate * elapsed` stays exact in integer arithmetic.
#[derive(Debug, Clone)]
pub struct TokenBucket {
    bits_per_sec: u64,
    burst_bytes: usize,
    tokens: u128,
    last: Duration,
}

impl TokenBucket {
    /// A full bucket.
    pub fn new(rate_kbit: f64, burst_bytes: usize) -> Result<Self> {
        if !(rate_kbit.is_finite() && rate_kbit > 0.0) {
            return Err(Error::config(format!("token bucket rate must be positive, got {rate_kbit}")));
        }
        if burst_bytes == 0 {
            return Err(Error::config("token bucket burst must be at least one byte"));
        }
        let mut bucket = TokenBucket {
            bits_per_sec: ((rate_kbit * 1000.0).round() as u64).max(1),
            burst_bytes,
            tokens: 0,
            last: Duration::ZERO,
        };
        bucket.tokens = bucket.capacity();
        Ok(bucket)
    }

    /// Sets the current fill level, capped at the burst size.
    pub fn with_tokens(mut self, bytes: usize) -> Self {
        self.tokens = (bytes.min(self.burst_bytes) as u128) * 8 * NANOS_PER_SEC;
        self
    }

    fn capacity(&self) -> u128 {
        self.burst_bytes as u128 * 8 * NANOS_PER_SEC
    }

    pub fn bits_per_sec(&self) -> u64 {
        self.bits_per_sec
    }

    pub fn burst_bytes(&self) -> usize {
        self.burst_bytes
    }

    /// Returns the time at which a packet offered at `now` may pass.
    pub fn admit(&mut self, bytes: usize, now: Duration) -> Result<Duration> {
        if bytes > self.burst_bytes {
            return Err(Error::config(format!(
                "packet of {bytes} bytes exceeds the {} byte burst and can never pass",
                self.burst_bytes
            )));
        }
        let rate = u128::from(self.bits_per_sec);
        // Packets leave in offer order.
        let mut t = now.max(self.last);
        let elapsed = (t - self.last).as_nanos();
        self.tokens = (self.tokens + rate * elapsed).min(self.capacity());

        let need = bytes as u128 * 8 * NANOS_PER_SEC;
        if self.tokens < need {
            let wait = (need - self.tokens).div_ceil(rate);
            t += Duration::from_nanos(wait as u64);
            self.tokens += rate * wait;
        }
        self.tokens -= need;
        self.last = t;
        Ok(t)
    }
}

/// Free-function form of [`TokenBucket::admit`].
pub fn token_bucket_admit(bytes: usize, now: Duration, bucket: &mut TokenBucket) -> Result<Duration> {
    bucket.admit(bytes, now)
}
