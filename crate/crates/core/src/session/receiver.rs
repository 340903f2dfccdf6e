use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::record::{StatsDirection, StatsRecord};
use super::{Endpoint, Flow, Outbox, Timer, DEFAULT_LATENCY_MS, REPORT_INTERVAL, SILENCE_TIMEOUT};
use crate::media::{reassemble_frame, FragmentHeader, MediaKind, Reassembly};
use crate::rtp::rtcp::{self, compact_ntp};
use crate::rtp::{Admission, JitterBuffer, RtcpPacket, ReceptionReport, RtpPacket, SourceStats};

#[derive(Debug, Clone)]
pub struct ReceiverConfig {
    pub latency: Duration,
    pub report_interval: Duration,
    pub silence_timeout: Duration,
    pub seed: u64,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        ReceiverConfig {
            latency: Duration::from_millis(u64::from(DEFAULT_LATENCY_MS)),
            report_interval: REPORT_INTERVAL,
            silence_timeout: SILENCE_TIMEOUT,
            seed: 0,
        }
    }
}

/// How the receiver learned that the stream ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EosKind {
    Bye,
    Timeout,
}

impl EosKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EosKind::Bye => "BYE",
            EosKind::Timeout => "timeout",
        }
    }
}

/// A frame the receiver saw at least one fragment of.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReceivedFrame {
    pub kind: MediaKind,
    pub frame_index: u32,
    pub rtp_timestamp: u32,
    pub received_bytes: usize,
    pub digest: u64,
    pub complete: bool,
    pub digest_ok: bool,
    pub missing_fragments: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SessionReceiveStats {
    pub ssrc: Option<u32>,
    pub packets_received: u64,
    pub expected: u64,
    pub cumulative_lost: i64,
    pub measured_loss_percent: f64,
    /// Interarrival jitter in clock units from the last report.
    pub final_jitter: u32,
    pub late_discards: u64,
    pub frames_complete: u64,
    pub frames_partial: u64,
    pub digest_failures: u64,
    pub payload_bytes: u64,
    pub malformed: u64,
    pub reports_sent: u64,
    pub bye_seen: bool,
    #[serde(skip)]
    pub last_report: Option<ReceptionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReceiverSummary {
    pub eos: Option<EosKind>,
    pub end_time: Duration,
    pub video: SessionReceiveStats,
    pub audio: SessionReceiveStats,
    #[serde(skip)]
    pub frames: Vec<ReceivedFrame>,
    #[serde(skip)]
    pub stats: Vec<StatsRecord>,
}

impl ReceiverSummary {
    pub fn session(&self, kind: MediaKind) -> &SessionReceiveStats {
        match kind {
            MediaKind::Video => &self.video,
            MediaKind::Audio => &self.audio,
        }
    }

    pub fn frames_complete(&self) -> u64 {
        self.video.frames_complete + self.audio.frames_complete
    }

    pub fn frames_partial(&self) -> u64 {
        self.video.frames_partial + self.audio.frames_partial
    }
}

#[derive(Debug, Default)]
struct FrameGroup {
    packets: Vec<RtpPacket>,
    fragments: BTreeSet<u16>,
    fragment_count: u16,
}

#[derive(Debug)]
struct RecvSession {
    kind: MediaKind,
    source: Option<SourceStats>,
    buffer: JitterBuffer,
    groups: BTreeMap<u32, FrameGroup>,
    frames: Vec<ReceivedFrame>,
    stats: SessionReceiveStats,
    drain_at: Option<Duration>,
}

impl RecvSession {
    fn new(kind: MediaKind, latency: Duration) -> Self {
        RecvSession {
            kind,
            source: None,
            buffer: JitterBuffer::new(latency),
            groups: BTreeMap::new(),
            frames: Vec::new(),
            stats: SessionReceiveStats::default(),
            drain_at: None,
        }
    }

    fn on_released(&mut self, packets: Vec<RtpPacket>) {
        for packet in packets {
            let Ok((header, _)) = FragmentHeader::parse(&packet.payload) else {
                self.stats.malformed += 1;
                continue;
            };
            let ts = packet.timestamp;
            let group = self.groups.entry(ts).or_default();
            group.fragment_count = header.fragment_count;
            if group.fragments.insert(header.fragment_index) {
                group.packets.push(packet);
            }
            if group.fragments.len() == usize::from(group.fragment_count) {
                let group = self.groups.remove(&ts).unwrap();
                self.finish_group(group);
            }
        }
    }

    fn finish_group(&mut self, group: FrameGroup) {
        let Some(first) = group.packets.first() else { return };
        let rtp_timestamp = first.timestamp;
        let header = FragmentHeader::parse(&first.payload).expect("parsed on release");
        let received_bytes = group
            .packets
            .iter()
            .map(|p| p.payload.len().saturating_sub(crate::media::FRAGMENT_HEADER_LEN))
            .sum();
        let (complete, digest_ok, missing) = match reassemble_frame(&group.packets) {
            Ok(Reassembly::Complete { digest_ok, .. }) => (true, digest_ok, 0),
            Ok(Reassembly::Partial { missing, .. }) => (false, false, missing.unwrap_or(0)),
            Err(_) => {
                self.stats.malformed += 1;
                (false, false, 0)
            }
        };
        if complete {
            self.stats.frames_complete += 1;
            if !digest_ok {
                self.stats.digest_failures += 1;
            }
        } else {
            self.stats.frames_partial += 1;
        }
        self.frames.push(ReceivedFrame {
            kind: self.kind,
            frame_index: header.0.frame_index,
            rtp_timestamp,
            received_bytes,
            digest: header.0.digest,
            complete,
            digest_ok,
            missing_fragments: missing,
        });
    }

    fn drain(&mut self, now: Duration, out: &mut Outbox) {
        let released = self.buffer.drain(now);
        self.on_released(released);
        self.arm_drain(out);
    }

    fn arm_drain(&mut self, out: &mut Outbox) {
        if let Some(deadline) = self.buffer.next_deadline() {
            if self.drain_at.is_none_or(|t| deadline < t) {
                self.drain_at = Some(deadline);
                out.schedule(deadline, Timer::Drain(self.kind));
            }
        }
    }

    fn close(&mut self) {
        let released = self.buffer.flush();
        self.on_released(released);
        for group in std::mem::take(&mut self.groups).into_values() {
            self.finish_group(group);
        }
        self.frames.sort_by_key(|f| f.frame_index);
        self.stats.late_discards = self.buffer.late_discards();
        if let Some(src) = &self.source {
            self.stats.ssrc = Some(src.ssrc);
            self.stats.packets_received = src.packets_received;
            self.stats.expected = src.expected();
            self.stats.cumulative_lost = src.cumulative_lost();
            self.stats.measured_loss_percent = if src.expected() > 0 {
                100.0 * src.cumulative_lost().max(0) as f64 / src.expected() as f64
            } else {
                0.0
            };
        }
    }
}

/// Receives both sessions, measures them and reconstructs frames.
#[derive(Debug)]
pub struct Receiver {
    config: ReceiverConfig,
    ssrc: u32,
    sessions: [RecvSession; 2],
    records: Vec<StatsRecord>,
    last_activity: Duration,
    finish_scheduled: bool,
    eos: Option<EosKind>,
    end_time: Duration,
}

fn slot(kind: MediaKind) -> usize {
    match kind {
        MediaKind::Video => 0,
        MediaKind::Audio => 1,
    }
}

impl Receiver {
    pub fn new(config: ReceiverConfig) -> Self {
        let ssrc = ChaCha8Rng::seed_from_u64(config.seed ^ 0x2ec3_17e2).random();
        Receiver {
            sessions: [
                RecvSession::new(MediaKind::Video, config.latency),
                RecvSession::new(MediaKind::Audio, config.latency),
            ],
            config,
            ssrc,
            records: Vec::new(),
            last_activity: Duration::ZERO,
            finish_scheduled: false,
            eos: None,
            end_time: Duration::ZERO,
        }
    }

    pub fn ssrc(&self) -> u32 {
        self.ssrc
    }

    pub fn stats_records(&self) -> &[StatsRecord] {
        &self.records
    }

    pub fn summary(&self) -> ReceiverSummary {
        let mut frames: Vec<ReceivedFrame> = self.sessions.iter().flat_map(|s| s.frames.clone()).collect();
        frames.sort_by_key(|f| (f.kind, f.frame_index));
        ReceiverSummary {
            eos: self.eos,
            end_time: self.end_time,
            video: self.sessions[0].stats.clone(),
            audio: self.sessions[1].stats.clone(),
            frames,
            stats: self.records.clone(),
        }
    }

    fn on_rtp(&mut self, now: Duration, kind: MediaKind, data: &[u8], out: &mut Outbox) {
        let session = &mut self.sessions[slot(kind)];
        let Ok(packet) = RtpPacket::decode(data) else {
            session.stats.malformed += 1;
            return;
        };
        let source = session
            .source
            .get_or_insert_with(|| SourceStats::new(packet.ssrc, kind.clock_rate()));
        if source.has_packets() && source.ssrc != packet.ssrc {
            session.stats.malformed += 1;
            return;
        }
        source.ssrc = packet.ssrc;
        source.on_packet(packet.sequence, packet.timestamp, now);
        session.stats.payload_bytes += packet.payload.len() as u64;
        if session.buffer.push(packet, now) == Admission::Queued {
            session.drain(now, out);
        }
    }

    fn on_rtcp(&mut self, now: Duration, kind: MediaKind, data: &[u8], out: &mut Outbox) {
        let session = &mut self.sessions[slot(kind)];
        let Ok(packets) = rtcp::decode_compound(data) else {
            session.stats.malformed += 1;
            return;
        };
        for packet in packets {
            match packet {
                RtcpPacket::SenderReport { ssrc, info, .. } => {
                    session
                        .source
                        .get_or_insert_with(|| SourceStats::new(ssrc, kind.clock_rate()))
                        .on_sender_report(compact_ntp(info.ntp_time), now);
                    self.records.push(StatsRecord {
                        time: now,
                        session: kind,
                        direction: StatsDirection::SR,
                        ssrc,
                        sender_info: Some(info),
                        report: None,
                    });
                }
                RtcpPacket::Bye { sources } => {
                    if !session.stats.bye_seen {
                        session.stats.bye_seen = true;
                        self.records.push(StatsRecord {
                            time: now,
                            session: kind,
                            direction: StatsDirection::BYE,
                            ssrc: sources.first().copied().unwrap_or(0),
                            sender_info: None,
                            report: None,
                        });
                    }
                }
                RtcpPacket::ReceiverReport { .. } => {}
            }
        }
        if !self.finish_scheduled && self.sessions.iter().all(|s| s.stats.bye_seen) {
            self.finish_scheduled = true;
            // Give in-flight packets one jitter-buffer latency to arrive.
            out.schedule(now + self.config.latency, Timer::Finish);
        }
    }

    fn send_report(&mut self, now: Duration, kind: MediaKind, out: &mut Outbox) {
        let session = &mut self.sessions[slot(kind)];
        let Some(source) = session.source.as_mut() else { return };
        let Ok(report) = source.build_reception_report(now) else { return };
        let packet = RtcpPacket::ReceiverReport {
            ssrc: self.ssrc,
            reports: vec![report],
        };
        out.send(
            Flow::RtcpReturn(kind),
            rtcp::encode_compound(&[packet]).expect("single report block"),
        );
        session.stats.reports_sent += 1;
        session.stats.final_jitter = report.jitter;
        session.stats.last_report = Some(report);
        self.records.push(StatsRecord {
            time: now,
            session: kind,
            direction: StatsDirection::RR,
            ssrc: self.ssrc,
            sender_info: None,
            report: Some(report),
        });
    }

    fn finish(&mut self, now: Duration, eos: EosKind, out: &mut Outbox) {
        for kind in MediaKind::ALL {
            self.send_report(now, kind, out);
            self.sessions[slot(kind)].close();
        }
        self.eos = Some(eos);
        self.end_time = now;
    }
}

impl Endpoint for Receiver {
    fn start(&mut self, now: Duration, out: &mut Outbox) {
        self.last_activity = now;
        out.schedule(now + self.config.report_interval, Timer::Report);
        out.schedule(now + self.config.silence_timeout, Timer::Silence);
    }

    fn on_datagram(&mut self, now: Duration, flow: Flow, data: &[u8], out: &mut Outbox) {
        if self.is_finished() {
            return;
        }
        self.last_activity = now;
        match flow {
            Flow::Rtp(kind) => self.on_rtp(now, kind, data, out),
            Flow::Rtcp(kind) => self.on_rtcp(now, kind, data, out),
            Flow::RtcpReturn(_) => {}
        }
    }

    fn on_timer(&mut self, now: Duration, timer: Timer, out: &mut Outbox) {
        if self.is_finished() {
            return;
        }
        match timer {
            Timer::Report => {
                for kind in MediaKind::ALL {
                    self.send_report(now, kind, out);
                }
                out.schedule(now + self.config.report_interval, Timer::Report);
            }
            Timer::Drain(kind) => {
                let session = &mut self.sessions[slot(kind)];
                if session.drain_at == Some(now) {
                    session.drain_at = None;
                }
                session.drain(now, out);
            }
            Timer::Silence => {
                let deadline = self.last_activity + self.config.silence_timeout;
                if now >= deadline {
                    self.finish(now, EosKind::Timeout, out);
                } else {
                    out.schedule(deadline, Timer::Silence);
                }
            }
            Timer::Finish => self.finish(now, EosKind::Bye, out),
            Timer::NextMedia | Timer::Bye(_) => {}
        }
    }

    fn is_finished(&self) -> bool {
        self.eos.is_some()
    }

    fn describe(&self) -> String {
        format!(
            "receiver: video {} pkts (bye={}), audio {} pkts (bye={}), eos={:?}",
            self.sessions[0].source.as_ref().map_or(0, |s| s.packets_received),
            self.sessions[0].stats.bye_seen,
            self.sessions[1].source.as_ref().map_or(0, |s| s.packets_received),
            self.sessions[1].stats.bye_seen,
            self.eos
        )
    }
}
