//! Streaming quality testbed.
//!
//! Synthetic audio/video timelines are sent over a dual RTP/RTCP session
//! through a userspace impairment channel (delay, jitter, loss, bandwidth),
//! measured with standard RTCP receiver statistics, and run over experiment
//! matrices whose artifacts are named after their network configuration.
//!
//! - [`media`]: source profiles, synthetic timelines, RTP fragmentation
//! - [`impairment`]: netem-style delay/loss, bandwidth pipe, token bucket
//! - [`rtp`]: RTP/RTCP codecs, reception statistics, jitter buffer
//! - [`session`]: sender and receiver endpoints
//! - [`transport`]: virtual-clock simulation and UDP execution
//! - [`orchestrator`]: matrices, run naming, artifacts, summaries

pub mod error;
pub mod impairment;
pub mod media;
pub mod orchestrator;
pub mod rtp;
pub mod session;
pub mod transport;

use std::time::Duration;

pub use error::{Error, Result};

/// Formats a run-relative time as seconds with nanosecond precision, e.g. `5.000000000`.
pub fn format_secs(t: Duration) -> String {
    format!("{}.{:09}", t.as_secs(), t.subsec_nanos())
}
