//! Sender and receiver endpoints.
//!
//! Both endpoints are plain state machines driven by three inputs (start,
//! datagram, timer) and emit datagrams and timer requests into an
//! [`Outbox`]. The simulation loop and the UDP loop drive the same code.

mod receiver;
mod record;
mod sender;

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::MediaKind;

pub use receiver::{EosKind, ReceivedFrame, Receiver, ReceiverConfig, ReceiverSummary, SessionReceiveStats};
pub use record::{write_received_manifest, write_stats, StatsDirection, StatsRecord};
pub use sender::{Sender, SenderConfig, SenderSummary, SessionSendStats};

/// RTCP report interval.
pub const REPORT_INTERVAL: Duration = Duration::from_secs(5);
/// Receiver gives up after this long without any packet.
pub const SILENCE_TIMEOUT: Duration = Duration::from_secs(10);
/// Default receive-side jitter buffer latency.
pub const DEFAULT_LATENCY_MS: u32 = 200;

/// Port plan for the dual video/audio session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionTopology {
    pub video_rtp_port: u16,
    pub video_rtcp_send_port: u16,
    pub video_rtcp_return_port: u16,
    pub audio_rtp_port: u16,
    pub audio_rtcp_send_port: u16,
    pub audio_rtcp_return_port: u16,
}

impl Default for SessionTopology {
    fn default() -> Self {
        SessionTopology {
            video_rtp_port: 5000,
            video_rtcp_send_port: 5001,
            video_rtcp_return_port: 5005,
            audio_rtp_port: 5002,
            audio_rtcp_send_port: 5003,
            audio_rtcp_return_port: 5007,
        }
    }
}

impl SessionTopology {
    /// Default plan shifted by `offset`, handy for running several pairs on one host.
    pub fn with_offset(offset: u16) -> Self {
        let d = SessionTopology::default();
        SessionTopology {
            video_rtp_port: d.video_rtp_port + offset,
            video_rtcp_send_port: d.video_rtcp_send_port + offset,
            video_rtcp_return_port: d.video_rtcp_return_port + offset,
            audio_rtp_port: d.audio_rtp_port + offset,
            audio_rtcp_send_port: d.audio_rtcp_send_port + offset,
            audio_rtcp_return_port: d.audio_rtcp_return_port + offset,
        }
    }

    pub fn ports(&self) -> [u16; 6] {
        [
            self.video_rtp_port,
            self.video_rtcp_send_port,
            self.video_rtcp_return_port,
            self.audio_rtp_port,
            self.audio_rtcp_send_port,
            self.audio_rtcp_return_port,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let ports = self.ports();
        for (i, a) in ports.iter().enumerate() {
            if *a == 0 {
                return Err(Error::config("port 0 is not allowed in the session topology"));
            }
            if ports[i + 1..].contains(a) {
                return Err(Error::config(format!("port {a} is used twice in the session topology")));
            }
        }
        Ok(())
    }

    pub fn port(&self, flow: Flow) -> u16 {
        match flow {
            Flow::Rtp(MediaKind::Video) => self.video_rtp_port,
            Flow::Rtcp(MediaKind::Video) => self.video_rtcp_send_port,
            Flow::RtcpReturn(MediaKind::Video) => self.video_rtcp_return_port,
            Flow::Rtp(MediaKind::Audio) => self.audio_rtp_port,
            Flow::Rtcp(MediaKind::Audio) => self.audio_rtcp_send_port,
            Flow::RtcpReturn(MediaKind::Audio) => self.audio_rtcp_return_port,
        }
    }

    /// Flows a role listens on.
    pub fn inbound_flows(role: Role) -> Vec<Flow> {
        Flow::ALL.into_iter().filter(|f| f.destination() == role).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Sender,
    Receiver,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Sender => "sender",
            Role::Receiver => "receiver",
        })
    }
}

/// A logical packet stream between the endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Flow {
    /// Media, sender to receiver.
    Rtp(MediaKind),
    /// Sender reports and BYE, sender to receiver.
    Rtcp(MediaKind),
    /// Receiver reports, receiver to sender.
    RtcpReturn(MediaKind),
}

impl Flow {
    pub const ALL: [Flow; 6] = [
        Flow::Rtp(MediaKind::Video),
        Flow::Rtcp(MediaKind::Video),
        Flow::RtcpReturn(MediaKind::Video),
        Flow::Rtp(MediaKind::Audio),
        Flow::Rtcp(MediaKind::Audio),
        Flow::RtcpReturn(MediaKind::Audio),
    ];

    pub fn media(self) -> MediaKind {
        match self {
            Flow::Rtp(m) | Flow::Rtcp(m) | Flow::RtcpReturn(m) => m,
        }
    }

    pub fn destination(self) -> Role {
        match self {
            Flow::Rtp(_) | Flow::Rtcp(_) => Role::Receiver,
            Flow::RtcpReturn(_) => Role::Sender,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Flow::Rtp(MediaKind::Video) => "video-rtp",
            Flow::Rtcp(MediaKind::Video) => "video-rtcp",
            Flow::RtcpReturn(MediaKind::Video) => "video-rtcp-return",
            Flow::Rtp(MediaKind::Audio) => "audio-rtp",
            Flow::Rtcp(MediaKind::Audio) => "audio-rtcp",
            Flow::RtcpReturn(MediaKind::Audio) => "audio-rtcp-return",
        }
    }
}

impl fmt::Display for Flow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Timer {
    NextMedia,
    Report,
    Bye(u8),
    Drain(MediaKind),
    Silence,
    Finish,
}

/// Side effects requested by an endpoint during one step.
#[derive(Debug, Default)]
pub struct Outbox {
    pub datagrams: Vec<(Flow, Vec<u8>)>,
    pub timers: Vec<(Duration, Timer)>,
}

impl Outbox {
    pub fn send(&mut self, flow: Flow, bytes: Vec<u8>) {
        self.datagrams.push((flow, bytes));
    }

    pub fn schedule(&mut self, at: Duration, timer: Timer) {
        self.timers.push((at, timer));
    }

    pub fn is_empty(&self) -> bool {
        self.datagrams.is_empty() && self.timers.is_empty()
    }
}

/// An endpoint state machine, independent of how packets and time are delivered.
pub trait Endpoint {
    fn start(&mut self, now: Duration, out: &mut Outbox);
    fn on_datagram(&mut self, now: Duration, flow: Flow, data: &[u8], out: &mut Outbox);
    fn on_timer(&mut self, now: Duration, timer: Timer, out: &mut Outbox);
    fn is_finished(&self) -> bool;
    /// One-line state description for diagnostics.
    fn describe(&self) -> String;
}
