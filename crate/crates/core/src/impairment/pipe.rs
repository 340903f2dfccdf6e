use std::collections::VecDeque;
use std::time::Duration;

/// Default pipe queue size in packets.
pub const DEFAULT_QUEUE_LIMIT: usize = 50;

/// Time to clock `bytes` onto a link of `bits_per_sec`, rounded up to a nanosecond.
pub fn transmission_time(bytes: usize, bits_per_sec: u64) -> Duration {
    let bits = bytes as u128 * 8;
    Duration::from_nanos((bits * 1_000_000_000).div_ceil(u128::from(bits_per_sec)) as u64)
}

/// Fixed-bandwidth link with a bounded FIFO queue and tail drop.
///
/// Each packet's exit time follows from the configured bandwidth and the
/// backlog it finds on arrival.
#[derive(Debug, Clone)]
pub struct PipeState {
    bits_per_sec: u64,
    queue_limit: usize,
    /// Exit times of packets still inside the pipe, in FIFO order.
    in_flight: VecDeque<Duration>,
    link_free_at: Duration,
    last_arrival: Duration,
}

impl PipeState {
    pub fn new(bandwidth_kbit: f64, queue_limit: usize) -> Self {
        PipeState {
            bits_per_sec: ((bandwidth_kbit * 1000.0).round() as u64).max(1),
            queue_limit,
            in_flight: VecDeque::new(),
            link_free_at: Duration::ZERO,
            last_arrival: Duration::ZERO,
        }
    }

    pub fn bits_per_sec(&self) -> u64 {
        self.bits_per_sec
    }

    pub fn link_free_at(&self) -> Duration {
        self.link_free_at
    }

    /// Packets queued or in transmission at time `t`.
    pub fn occupancy(&self, t: Duration) -> usize {
        self.in_flight.iter().filter(|&&exit| exit > t).count()
    }

    /// Returns the exit time, or `None` when the queue is full.
    ///
    /// Arrivals are served in call order; an arrival earlier than the previous
    /// one is treated as arriving together with it.
    pub fn enqueue(&mut self, bytes: usize, arrival: Duration) -> Option<Duration> {
        let arrival = arrival.max(self.last_arrival);
        self.last_arrival = arrival;
        while self.in_flight.front().is_some_and(|&exit| exit <= arrival) {
            self.in_flight.pop_front();
        }
        if self.in_flight.len() >= self.queue_limit {
            return None;
        }
        let deliver = arrival.max(self.link_free_at) + transmission_time(bytes, self.bits_per_sec);
        self.link_free_at = deliver;
        self.in_flight.push_back(deliver);
        Some(deliver)
    }
}

/// Free-function form of [`PipeState::enqueue`].
pub fn pipe_enqueue(bytes: usize, arrival: Duration, state: &mut PipeState) -> Option<Duration> {
    state.enqueue(bytes, arrival)
}
