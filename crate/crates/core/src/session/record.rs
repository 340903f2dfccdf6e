use std::collections::HashMap;
use std::io::Write;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::receiver::ReceivedFrame;
use crate::error::Result;
use crate::format_secs;
use crate::media::{MediaKind, MediaTimeline};
use crate::rtp::{ReceptionReport, SenderInfo};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StatsDirection {
    SR,
    RR,
    BYE,
}

impl StatsDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            StatsDirection::SR => "SR",
            StatsDirection::RR => "RR",
            StatsDirection::BYE => "BYE",
        }
    }
}

/// One RTCP event seen or produced by the receiver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatsRecord {
    pub time: Duration,
    pub session: MediaKind,
    pub direction: StatsDirection,
    /// SSRC of the packet's originator.
    pub ssrc: u32,
    pub sender_info: Option<SenderInfo>,
    pub report: Option<ReceptionReport>,
}

pub const STATS_COLUMNS: [&str; 15] = [
    "time",
    "session",
    "direction",
    "ssrc",
    "ntp_time",
    "rtp_time",
    "packet_count",
    "octet_count",
    "report_ssrc",
    "fraction_lost",
    "cumulative_lost",
    "extended_highest_seq",
    "interarrival_jitter",
    "last_sr",
    "delay_since_last_sr",
];

impl StatsRecord {
    fn fields(&self) -> [String; 15] {
        let opt = |v: Option<String>| v.unwrap_or_default();
        let si = self.sender_info;
        let rr = self.report;
        [
            format_secs(self.time),
            self.session.as_str().to_string(),
            self.direction.as_str().to_string(),
            self.ssrc.to_string(),
            opt(si.map(|s| s.ntp_time.to_string())),
            opt(si.map(|s| s.rtp_time.to_string())),
            opt(si.map(|s| s.packet_count.to_string())),
            opt(si.map(|s| s.octet_count.to_string())),
            opt(rr.map(|r| r.ssrc.to_string())),
            opt(rr.map(|r| r.fraction_lost.to_string())),
            opt(rr.map(|r| r.cumulative_lost.to_string())),
            opt(rr.map(|r| r.extended_highest_seq.to_string())),
            opt(rr.map(|r| r.jitter.to_string())),
            opt(rr.map(|r| r.last_sr.to_string())),
            opt(rr.map(|r| r.delay_since_last_sr.to_string())),
        ]
    }
}

/// Writes the stats file: a CSV header followed by one row per RTCP event.
pub fn write_stats<W: Write>(records: &[StatsRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STATS_COLUMNS)?;
    for r in records {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Line of the received-media manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceivedManifestRecord {
    pub kind: MediaKind,
    pub index: u32,
    pub rtp_timestamp: u32,
    pub size: usize,
    pub digest: String,
    pub received: bool,
    pub complete: bool,
    pub digest_ok: bool,
    /// Missing fragments; `null` when nothing of the frame arrived.
    pub missing_fragments: Option<usize>,
}

/// Writes the received-media manifest. With the sent timeline available
/// every sent frame gets a line, including frames that never arrived;
/// otherwise only frames that were at least partly received are listed.
pub fn write_received_manifest<W: Write>(
    timeline: Option<&MediaTimeline>,
    frames: &[ReceivedFrame],
    mut out: W,
) -> Result<()> {
    let mut line = |rec: ReceivedManifestRecord| -> Result<()> {
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
        Ok(())
    };
    match timeline {
        Some(tl) => {
            let by_key: HashMap<(MediaKind, u32), &ReceivedFrame> =
                frames.iter().map(|f| ((f.kind, f.frame_index), f)).collect();
            for frame in tl.video_frames.iter().chain(&tl.audio_frames) {
                let got = by_key.get(&(frame.kind, frame.index));
                line(ReceivedManifestRecord {
                    kind: frame.kind,
                    index: frame.index,
                    rtp_timestamp: frame.rtp_timestamp,
                    size: frame.size,
                    digest: format!("{:016x}", frame.payload_digest),
                    received: got.is_some(),
                    complete: got.is_some_and(|f| f.complete),
                    digest_ok: got.is_some_and(|f| f.digest_ok),
                    missing_fragments: got.map(|f| f.missing_fragments),
                })?;
            }
        }
        None => {
            for f in frames {
                line(ReceivedManifestRecord {
                    kind: f.kind,
                    index: f.frame_index,
                    rtp_timestamp: f.rtp_timestamp,
                    size: f.received_bytes,
                    digest: format!("{:016x}", f.digest),
                    received: true,
                    complete: f.complete,
                    digest_ok: f.digest_ok,
                    missing_fragments: Some(f.missing_fragments),
                })?;
            }
        }
    }
    Ok(())
}
