use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Endpoint, Flow, Outbox, Timer, REPORT_INTERVAL};
use crate::error::Result;
use crate::media::{packetize_frame, payload_capacity, rtp_timestamp_at, MediaKind, MediaTimeline, SequenceCursor, DEFAULT_MTU};
use crate::rtp::rtcp::{self, ntp_from_duration};
use crate::rtp::{RtcpPacket, ReceptionReport, SenderInfo};

/// BYE is repeated so that a single lost datagram does not hide end of stream.
pub const BYE_REPEATS: u8 = 3;
pub const BYE_SPACING: Duration = Duration::from_millis(10);

#[derive(Debug, Clone)]
pub struct SenderConfig {
    pub mtu: usize,
    pub report_interval: Duration,
    /// Seeds the SSRCs and initial sequence numbers.
    pub seed: u64,
}

impl Default for SenderConfig {
    fn default() -> Self {
        SenderConfig {
            mtu: DEFAULT_MTU,
            report_interval: REPORT_INTERVAL,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SessionSendStats {
    pub ssrc: u32,
    pub packets_sent: u64,
    /// Payload octets, RTP headers excluded.
    pub octets_sent: u64,
    pub frames_sent: u64,
    pub sender_reports: u64,
    pub bye_sent: u64,
    pub rr_received: u64,
    #[serde(skip)]
    pub last_rr: Option<ReceptionReport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SenderSummary {
    pub video: SessionSendStats,
    pub audio: SessionSendStats,
    pub end_time: Duration,
    /// Set when the transport failed mid-run.
    pub aborted: Option<String>,
}

impl SenderSummary {
    pub fn session(&self, kind: MediaKind) -> &SessionSendStats {
        match kind {
            MediaKind::Video => &self.video,
            MediaKind::Audio => &self.audio,
        }
    }
}

#[derive(Debug)]
struct SendSession {
    cursor: SequenceCursor,
    stats: SessionSendStats,
}

/// Streams a timeline on two RTP sessions with RTCP on both.
#[derive(Debug)]
pub struct Sender {
    timeline: MediaTimeline,
    config: SenderConfig,
    schedule: Vec<(Duration, MediaKind, usize)>,
    next: usize,
    sessions: [SendSession; 2],
    base: Duration,
    media_done: bool,
    finished: bool,
    end_time: Duration,
    aborted: Option<String>,
}

fn slot(kind: MediaKind) -> usize {
    match kind {
        MediaKind::Video => 0,
        MediaKind::Audio => 1,
    }
}

impl Sender {
    pub fn new(timeline: MediaTimeline, config: SenderConfig) -> Result<Self> {
        payload_capacity(config.mtu)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5e4d_e700);
        let video_ssrc: u32 = rng.random();
        let mut audio_ssrc: u32 = rng.random();
        if audio_ssrc == video_ssrc {
            audio_ssrc = audio_ssrc.wrapping_add(1);
        }
        let session = |ssrc, rng: &mut ChaCha8Rng| SendSession {
            cursor: SequenceCursor::new(rng.random()),
            stats: SessionSendStats {
                ssrc,
                ..Default::default()
            },
        };
        let sessions = [
            session(video_ssrc, &mut rng),
            session(audio_ssrc, &mut rng),
        ];
        let schedule = timeline
            .schedule()
            .into_iter()
            .map(|f| {
                let idx = f.index as usize;
                (f.capture_time, f.kind, idx)
            })
            .collect();
        Ok(Sender {
            timeline,
            config,
            schedule,
            next: 0,
            sessions,
            base: Duration::ZERO,
            media_done: false,
            finished: false,
            end_time: Duration::ZERO,
            aborted: None,
        })
    }

    pub fn ssrc(&self, kind: MediaKind) -> u32 {
        self.sessions[slot(kind)].stats.ssrc
    }

    pub fn initial_sequence(&self, kind: MediaKind) -> u16 {
        self.sessions[slot(kind)].cursor.peek()
    }

    pub fn timeline(&self) -> &MediaTimeline {
        &self.timeline
    }

    /// Stops the run after a transport failure.
    pub fn abort(&mut self, now: Duration, reason: impl Into<String>) {
        self.aborted = Some(reason.into());
        self.finished = true;
        self.end_time = now;
    }

    pub fn summary(&self) -> SenderSummary {
        SenderSummary {
            video: self.sessions[0].stats.clone(),
            audio: self.sessions[1].stats.clone(),
            end_time: self.end_time,
            aborted: self.aborted.clone(),
        }
    }

    fn send_frame(&mut self, kind: MediaKind, index: usize, out: &mut Outbox) {
        let frame = &self.timeline.frames(kind)[index];
        let payload = self.timeline.payload(frame);
        let session = &mut self.sessions[slot(kind)];
        let packets = packetize_frame(frame, &payload, self.config.mtu, session.stats.ssrc, &mut session.cursor)
            .expect("sender MTU validated at construction");
        for packet in packets {
            session.stats.packets_sent += 1;
            session.stats.octets_sent += packet.payload.len() as u64;
            out.send(Flow::Rtp(kind), packet.encode().expect("packetizer never emits empty payloads"));
        }
        session.stats.frames_sent += 1;
    }

    fn sender_report(&mut self, now: Duration, kind: MediaKind) -> RtcpPacket {
        let media_time = now.saturating_sub(self.base);
        let session = &mut self.sessions[slot(kind)];
        session.stats.sender_reports += 1;
        RtcpPacket::SenderReport {
            ssrc: session.stats.ssrc,
            info: SenderInfo {
                ntp_time: ntp_from_duration(now),
                rtp_time: rtp_timestamp_at(media_time, kind.clock_rate()),
                packet_count: session.stats.packets_sent as u32,
                octet_count: session.stats.octets_sent as u32,
            },
            reports: Vec::new(),
        }
    }

    fn send_reports(&mut self, now: Duration, with_bye: bool, out: &mut Outbox) {
        for kind in MediaKind::ALL {
            let mut compound = vec![self.sender_report(now, kind)];
            if with_bye {
                let session = &mut self.sessions[slot(kind)];
                session.stats.bye_sent += 1;
                compound.push(RtcpPacket::Bye {
                    sources: vec![session.stats.ssrc],
                });
            }
            let bytes = rtcp::encode_compound(&compound).expect("fixed-size RTCP packets");
            out.send(Flow::Rtcp(kind), bytes);
        }
    }

    fn end_media(&mut self, now: Duration, out: &mut Outbox) {
        self.media_done = true;
        self.send_reports(now, true, out);
        if BYE_REPEATS > 1 {
            out.schedule(now + BYE_SPACING, Timer::Bye(1));
        } else {
            self.finish(now);
        }
    }

    fn finish(&mut self, now: Duration) {
        self.finished = true;
        self.end_time = now;
    }

    fn pump_media(&mut self, now: Duration, out: &mut Outbox) {
        while let Some(&(at, kind, index)) = self.schedule.get(self.next) {
            if self.base + at > now {
                out.schedule(self.base + at, Timer::NextMedia);
                return;
            }
            self.send_frame(kind, index, out);
            self.next += 1;
        }
        self.end_media(now, out);
    }
}

impl Endpoint for Sender {
    fn start(&mut self, now: Duration, out: &mut Outbox) {
        self.base = now;
        if self.schedule.is_empty() {
            self.end_media(now, out);
            return;
        }
        out.schedule(now + self.config.report_interval, Timer::Report);
        self.pump_media(now, out);
    }

    fn on_datagram(&mut self, _now: Duration, flow: Flow, data: &[u8], _out: &mut Outbox) {
        let Flow::RtcpReturn(kind) = flow else { return };
        let Ok(packets) = rtcp::decode_compound(data) else { return };
        let session = &mut self.sessions[slot(kind)];
        for packet in packets {
            let reports = match packet {
                RtcpPacket::ReceiverReport { reports, .. } | RtcpPacket::SenderReport { reports, .. } => reports,
                RtcpPacket::Bye { .. } => continue,
            };
            for r in reports.into_iter().filter(|r| r.ssrc == session.stats.ssrc) {
                session.stats.rr_received += 1;
                session.stats.last_rr = Some(r);
            }
        }
    }

    fn on_timer(&mut self, now: Duration, timer: Timer, out: &mut Outbox) {
        if self.finished {
            return;
        }
        match timer {
            Timer::NextMedia if !self.media_done => self.pump_media(now, out),
            Timer::Report if !self.media_done => {
                self.send_reports(now, false, out);
                out.schedule(now + self.config.report_interval, Timer::Report);
            }
            Timer::Bye(n) => {
                self.send_reports(now, true, out);
                if n + 1 < BYE_REPEATS {
                    out.schedule(now + BYE_SPACING, Timer::Bye(n + 1));
                } else {
                    self.finish(now);
                }
            }
            _ => {}
        }
    }

    fn is_finished(&self) -> bool {
        self.finished
    }

    fn describe(&self) -> String {
        format!(
            "sender: {}/{} frames sent, media_done={}, finished={}",
            self.next,
            self.schedule.len(),
            self.media_done,
            self.finished
        )
    }
}
