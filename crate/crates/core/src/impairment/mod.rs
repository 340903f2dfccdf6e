//! Userspace network impairment.
//!
//! A [`Channel`] chains a netem-style delay/jitter and loss stage with an
//! optional bandwidth stage, either a DummyNet-style [`PipeState`] or a
//! [`TokenBucket`] shaper. Decisions are made when a packet enters the
//! channel and are a pure function of the seed and the offered sequence.

mod netem;
mod pipe;
mod token_bucket;

use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use netem::{netem_apply, NetemOutcome, NetemParams};
pub use pipe::{pipe_enqueue, transmission_time, PipeState, DEFAULT_QUEUE_LIMIT};
pub use token_bucket::{token_bucket_admit, TokenBucket};

/// Network condition of one experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpairmentConfig {
    /// Packet loss rate, percent.
    pub plr: f64,
    /// One-way delay, ms.
    pub delay: f64,
    /// Uniform jitter amplitude, ms.
    pub jitter: f64,
    /// Pipe bandwidth, kbit/s. `None` means unlimited.
    pub bandwidth: Option<f64>,
    pub queue_limit: usize,
    pub seed: u64,
}

impl Default for ImpairmentConfig {
    fn default() -> Self {
        ImpairmentConfig {
            plr: 0.0,
            delay: 0.0,
            jitter: 0.0,
            bandwidth: None,
            queue_limit: DEFAULT_QUEUE_LIMIT,
            seed: 0,
        }
    }
}

fn ms_to_duration(ms: f64) -> Duration {
    Duration::from_nanos((ms * 1e6).round() as u64)
}

impl ImpairmentConfig {
    pub fn lossy(plr: f64) -> Self {
        ImpairmentConfig {
            plr,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=100.0).contains(&self.plr) {
            return Err(Error::config(format!("plr must be within [0, 100], got {}", self.plr)));
        }
        for (name, v) in [("delay", self.delay), ("jitter", self.jitter)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{name} must be a non-negative number of ms, got {v}")));
            }
        }
        if let Some(bw) = self.bandwidth {
            if !(bw.is_finite() && bw > 0.0) {
                return Err(Error::config(format!("bandwidth must be positive, got {bw}")));
            }
            if self.queue_limit == 0 {
                return Err(Error::config("queue_limit must be at least one packet"));
            }
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.plr == 0.0 && self.delay == 0.0 && self.jitter == 0.0 && self.bandwidth.is_none()
    }

    pub fn netem_params(&self) -> NetemParams {
        NetemParams {
            delay: ms_to_duration(self.delay),
            jitter: ms_to_duration(self.jitter),
            plr: self.plr,
        }
    }

    /// Stage list equivalent to this configuration.
    pub fn stages(&self) -> Vec<StageConfig> {
        let mut stages = Vec::new();
        if self.delay > 0.0 || self.jitter > 0.0 {
            stages.push(StageConfig::Delay {
                delay_ms: self.delay,
                jitter_ms: self.jitter,
            });
        }
        if self.plr > 0.0 {
            stages.push(StageConfig::Loss { plr: self.plr });
        }
        if let Some(bandwidth_kbit) = self.bandwidth {
            stages.push(StageConfig::Pipe {
                bandwidth_kbit,
                queue_limit: self.queue_limit,
            });
        }
        stages
    }

    pub fn build_channel(&self) -> Result<Channel> {
        self.validate()?;
        compose_channel(&self.stages(), self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum StageConfig {
    Delay { delay_ms: f64, jitter_ms: f64 },
    Loss { plr: f64 },
    Pipe { bandwidth_kbit: f64, queue_limit: usize },
    TokenBucket { rate_kbit: f64, burst_bytes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Netem,
    Pipe,
    Shaper,
}

#[derive(Debug, Clone)]
enum Bandwidth {
    Pipe(PipeState),
    Shaper(TokenBucket),
}

/// What happened to one packet inside the channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Decision {
    /// Exit time of each stage the packet went through.
    pub stages: Vec<(StageKind, Duration)>,
    /// `None` when dropped.
    pub deliver_at: Option<Duration>,
    pub dropped_by: Option<StageKind>,
}

/// An ordered impairment chain with its own RNG stream.
#[derive(Debug, Clone)]
pub struct Channel {
    netem: Option<NetemParams>,
    bandwidth: Option<Bandwidth>,
    rng: ChaCha8Rng,
}

impl Channel {
    pub fn identity() -> Self {
        Channel {
            netem: None,
            bandwidth: None,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.netem.is_none() && self.bandwidth.is_none()
    }

    /// Passes a packet of `bytes` entering at `now` through the stages.
    pub fn offer(&mut self, bytes: usize, now: Duration) -> Result<Decision> {
        let mut stages = Vec::with_capacity(2);
        let mut t = now;
        if let Some(params) = &self.netem {
            match netem_apply(t, params, &mut self.rng) {
                NetemOutcome::Dropped => {
                    return Ok(Decision {
                        stages,
                        deliver_at: None,
                        dropped_by: Some(StageKind::Netem),
                    })
                }
                NetemOutcome::Scheduled(at) => {
                    t = at;
                    stages.push((StageKind::Netem, t));
                }
            }
        }
        match &mut self.bandwidth {
            Some(Bandwidth::Pipe(pipe)) => match pipe.enqueue(bytes, t) {
                Some(at) => {
                    t = at;
                    stages.push((StageKind::Pipe, t));
                }
                None => {
                    return Ok(Decision {
                        stages,
                        deliver_at: None,
                        dropped_by: Some(StageKind::Pipe),
                    })
                }
            },
            Some(Bandwidth::Shaper(bucket)) => {
                t = bucket.admit(bytes, t)?;
                stages.push((StageKind::Shaper, t));
            }
            None => {}
        }
        Ok(Decision {
            stages,
            deliver_at: Some(t),
            dropped_by: None,
        })
    }
}

/// Builds a channel. Stages always run delay/jitter, then loss, then the
/// bandwidth stage, whatever order they are listed in. Delay and loss share
/// one netem step so the RNG draw order does not depend on which of them is
/// configured.
pub fn compose_channel(stages: &[StageConfig], seed: u64) -> Result<Channel> {
    let mut delay: Option<(f64, f64)> = None;
    let mut plr: Option<f64> = None;
    let mut bandwidth: Option<Bandwidth> = None;

    for stage in stages {
        match *stage {
            StageConfig::Delay { delay_ms, jitter_ms } => {
                if delay.is_some() {
                    return Err(Error::config("duplicate delay stage"));
                }
                if !(delay_ms >= 0.0 && jitter_ms >= 0.0 && delay_ms.is_finite() && jitter_ms.is_finite()) {
                    return Err(Error::config(format!(
                        "delay stage needs non-negative values, got delay={delay_ms} jitter={jitter_ms}"
                    )));
                }
                delay = Some((delay_ms, jitter_ms));
            }
            StageConfig::Loss { plr: p } => {
                if plr.is_some() {
                    return Err(Error::config("duplicate loss stage"));
                }
                if !(0.0..=100.0).contains(&p) {
                    return Err(Error::config(format!("plr must be within [0, 100], got {p}")));
                }
                plr = Some(p);
            }
            StageConfig::Pipe {
                bandwidth_kbit,
                queue_limit,
            } => {
                if bandwidth.is_some() {
                    return Err(Error::config("duplicate bandwidth stage"));
                }
                if !(bandwidth_kbit.is_finite() && bandwidth_kbit > 0.0) || queue_limit == 0 {
                    return Err(Error::config(format!(
                        "pipe needs positive bandwidth and queue, got {bandwidth_kbit} kbit/s, {queue_limit} slots"
                    )));
                }
                bandwidth = Some(Bandwidth::Pipe(PipeState::new(bandwidth_kbit, queue_limit)));
            }
            StageConfig::TokenBucket { rate_kbit, burst_bytes } => {
                if bandwidth.is_some() {
                    return Err(Error::config("duplicate bandwidth stage"));
                }
                bandwidth = Some(Bandwidth::Shaper(TokenBucket::new(rate_kbit, burst_bytes)?));
            }
        }
    }

    let netem = (delay.is_some() || plr.is_some()).then(|| {
        let (delay_ms, jitter_ms) = delay.unwrap_or((0.0, 0.0));
        NetemParams {
            delay: ms_to_duration(delay_ms),
            jitter: ms_to_duration(jitter_ms),
            plr: plr.unwrap_or(0.0),
        }
    });
    Ok(Channel {
        netem,
        bandwidth,
        rng: ChaCha8Rng::seed_from_u64(seed),
    })
}
