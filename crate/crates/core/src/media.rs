//! Synthetic media sources.
//!
//! A [`MediaTimeline`] stands in for a pre-encoded audio/video file: it lists
//! timestamped frames whose sizes follow the profile's bitrate, and whose
//! payload bytes can be regenerated from `(source_id, kind, index)` alone.
//! Frames are carried over RTP with a small fragment header so that the
//! receiving side can put them back together and check the digest.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Duration;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rtp::{RtpPacket, RTP_HEADER_LEN};

pub const VIDEO_CLOCK_RATE: u32 = 90_000;
pub const AUDIO_CLOCK_RATE: u32 = 16_000;
pub const AUDIO_FRAME_MS: u32 = 20;

pub const VIDEO_PAYLOAD_TYPE: u8 = 96;
pub const AUDIO_PAYLOAD_TYPE: u8 = 97;

/// Bytes prepended to each RTP payload: frame index, fragment index,
/// fragment count and the frame digest.
pub const FRAGMENT_HEADER_LEN: usize = 16;

/// Default MTU, chosen so that each packet carries 1400 payload bytes.
pub const DEFAULT_MTU: usize = 1400 + RTP_HEADER_LEN + FRAGMENT_HEADER_LEN;
pub const MIN_MTU: usize = 64;

// Lognormal shape for video frame sizes.
const FRAME_SIZE_SIGMA: f64 = 0.5;
const FRAME_SIZE_MIN_FACTOR: f64 = 0.2;
const FRAME_SIZE_MAX_FACTOR: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Resolution {
    #[serde(rename = "720p")]
    R720p,
    #[serde(rename = "1080p")]
    R1080p,
}

impl Resolution {
    pub const ALL: [Resolution; 2] = [Resolution::R720p, Resolution::R1080p];

    pub fn as_str(self) -> &'static str {
        match self {
            Resolution::R720p => "720p",
            Resolution::R1080p => "1080p",
        }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Resolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "720p" => Ok(Resolution::R720p),
            "1080p" => Ok(Resolution::R1080p),
            other => Err(Error::config(format!("unknown resolution `{other}`"))),
        }
    }
}

/// Bitrate quality tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tier {
    HQ,
    MQ,
    LQ,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::HQ, Tier::MQ, Tier::LQ];

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::HQ => "HQ",
            Tier::MQ => "MQ",
            Tier::LQ => "LQ",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "HQ" => Ok(Tier::HQ),
            "MQ" => Ok(Tier::MQ),
            "LQ" => Ok(Tier::LQ),
            other => Err(Error::config(format!("unknown quality tier `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaKind {
    Video,
    Audio,
}

impl MediaKind {
    pub const ALL: [MediaKind; 2] = [MediaKind::Video, MediaKind::Audio];

    pub fn as_str(self) -> &'static str {
        match self {
            MediaKind::Video => "video",
            MediaKind::Audio => "audio",
        }
    }

    pub fn clock_rate(self) -> u32 {
        match self {
            MediaKind::Video => VIDEO_CLOCK_RATE,
            MediaKind::Audio => AUDIO_CLOCK_RATE,
        }
    }

    pub fn payload_type(self) -> u8 {
        match self {
            MediaKind::Video => VIDEO_PAYLOAD_TYPE,
            MediaKind::Audio => AUDIO_PAYLOAD_TYPE,
        }
    }

    pub fn from_payload_type(pt: u8) -> Option<Self> {
        match pt {
            VIDEO_PAYLOAD_TYPE => Some(MediaKind::Video),
            AUDIO_PAYLOAD_TYPE => Some(MediaKind::Audio),
            _ => None,
        }
    }
}

impl fmt::Display for MediaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Encoding parameters of one source file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaProfile {
    pub source_id: String,
    pub resolution: Resolution,
    pub tier: Tier,
    /// kbit/s
    pub video_bitrate: f64,
    pub video_fps: f64,
    pub video_clock_rate: u32,
    /// kbit/s
    pub audio_bitrate: f64,
    pub audio_clock_rate: u32,
    pub audio_frame_ms: u32,
    /// seconds
    pub duration: f64,
}

impl MediaProfile {
    /// Profile with the fixed clock rates and audio cadence filled in.
    pub fn new(
        source_id: impl Into<String>,
        resolution: Resolution,
        tier: Tier,
        video_bitrate: f64,
        video_fps: f64,
        audio_bitrate: f64,
        duration: f64,
    ) -> Self {
        MediaProfile {
            source_id: source_id.into(),
            resolution,
            tier,
            video_bitrate,
            video_fps,
            video_clock_rate: VIDEO_CLOCK_RATE,
            audio_bitrate,
            audio_clock_rate: AUDIO_CLOCK_RATE,
            audio_frame_ms: AUDIO_FRAME_MS,
            duration,
        }
    }

    /// The six built-in sources, one per resolution and tier.
    ///
    /// The bitrates are configuration defaults.
    pub fn builtin() -> Vec<MediaProfile> {
        let mut profiles = Vec::with_capacity(6);
        let mut n = 1;
        for resolution in [Resolution::R1080p, Resolution::R720p] {
            for tier in Tier::ALL {
                let video_bitrate = match (resolution, tier) {
                    (Resolution::R1080p, Tier::HQ) => 8000.0,
                    (Resolution::R1080p, Tier::MQ) => 4000.0,
                    (Resolution::R1080p, Tier::LQ) => 2000.0,
                    (Resolution::R720p, Tier::HQ) => 4000.0,
                    (Resolution::R720p, Tier::MQ) => 2000.0,
                    (Resolution::R720p, Tier::LQ) => 1000.0,
                };
                profiles.push(MediaProfile::new(
                    format!("s{n:02}"),
                    resolution,
                    tier,
                    video_bitrate,
                    25.0,
                    24.0,
                    60.0,
                ));
                n += 1;
            }
        }
        profiles
    }

    pub fn builtin_by_id(source_id: &str) -> Option<MediaProfile> {
        Self::builtin().into_iter().find(|p| p.source_id == source_id)
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.duration = duration;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.source_id.is_empty()
            || !self
                .source_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-')
        {
            return Err(Error::config(format!(
                "source id `{}` must be non-empty ASCII alphanumerics or '-'",
                self.source_id
            )));
        }
        if self.video_clock_rate != VIDEO_CLOCK_RATE || self.audio_clock_rate != AUDIO_CLOCK_RATE {
            return Err(Error::config(format!(
                "clock rates must be {VIDEO_CLOCK_RATE} (video) and {AUDIO_CLOCK_RATE} (audio)"
            )));
        }
        if self.audio_frame_ms != AUDIO_FRAME_MS {
            return Err(Error::config(format!(
                "audio frame duration must be {AUDIO_FRAME_MS} ms"
            )));
        }
        for (name, value) in [
            ("video_bitrate", self.video_bitrate),
            ("video_fps", self.video_fps),
            ("audio_bitrate", self.audio_bitrate),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(Error::config(format!(
                "duration must be non-negative, got {}",
                self.duration
            )));
        }
        Ok(())
    }

    pub fn video_frame_count(&self) -> u32 {
        count_frames(self.duration * self.video_fps)
    }

    pub fn audio_frame_count(&self) -> u32 {
        count_frames(self.duration * 1000.0 / f64::from(self.audio_frame_ms))
    }

    /// Mean video frame size in bytes implied by bitrate and frame rate.
    pub fn mean_video_frame_size(&self) -> f64 {
        self.video_bitrate * 1000.0 / 8.0 / self.video_fps
    }

    pub fn audio_frame_size(&self) -> usize {
        let bytes = self.audio_bitrate * 1000.0 / 8.0 * f64::from(self.audio_frame_ms) / 1000.0;
        (bytes.round() as usize).max(1)
    }
}

fn count_frames(exact: f64) -> u32 {
    // Tolerate representation error so 10 s at 25 fps yields 250, not 249.
    (exact + 1e-9).floor().max(0.0) as u32
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub kind: MediaKind,
    pub index: u32,
    /// Media time from the start of the stream.
    pub capture_time: Duration,
    pub rtp_timestamp: u32,
    pub size: usize,
    pub payload_digest: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MediaTimeline {
    pub profile: MediaProfile,
    pub video_frames: Vec<Frame>,
    pub audio_frames: Vec<Frame>,
    pub seed: u64,
}

/// RTP timestamp for a media time: `round(t * clock_rate) mod 2^32`.
pub fn rtp_timestamp_at(capture_time: Duration, clock_rate: u32) -> u32 {
    let ticks = (capture_time.as_nanos() * u128::from(clock_rate) + 500_000_000) / 1_000_000_000;
    ticks as u32
}

/// Builds the frame list for `profile`. Deterministic in `(profile, seed)`.
pub fn generate_timeline(profile: &MediaProfile, seed: u64) -> Result<MediaTimeline> {
    profile.validate()?;

    let n_video = profile.video_frame_count() as usize;
    let mean = profile.mean_video_frame_size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(profile.source_id.as_bytes()));
    let lognormal = LogNormal::new(-FRAME_SIZE_SIGMA * FRAME_SIZE_SIGMA / 2.0, FRAME_SIZE_SIGMA)
        .expect("fixed lognormal parameters are valid");
    let raw: Vec<f64> = (0..n_video).map(|_| lognormal.sample(&mut rng)).collect();
    // Rescale so the drawn sizes add up to the bitrate budget exactly.
    let scale = if raw.is_empty() {
        1.0
    } else {
        raw.len() as f64 / raw.iter().sum::<f64>()
    };
    let (lo, hi) = (
        (mean * FRAME_SIZE_MIN_FACTOR).max(1.0),
        (mean * FRAME_SIZE_MAX_FACTOR).max(1.0),
    );

    let video_frames = raw
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let size = (r * scale * mean).clamp(lo, hi).round() as usize;
            let capture_time = Duration::from_secs_f64(i as f64 / profile.video_fps);
            make_frame(&profile.source_id, MediaKind::Video, i as u32, capture_time, size.max(1))
        })
        .collect();

    let audio_size = profile.audio_frame_size();
    let step = Duration::from_millis(u64::from(profile.audio_frame_ms));
    let audio_frames = (0..profile.audio_frame_count())
        .map(|i| make_frame(&profile.source_id, MediaKind::Audio, i, step * i, audio_size))
        .collect();

    Ok(MediaTimeline {
        profile: profile.clone(),
        video_frames,
        audio_frames,
        seed,
    })
}

fn make_frame(source_id: &str, kind: MediaKind, index: u32, capture_time: Duration, size: usize) -> Frame {
    let payload = synthetic_payload(source_id, kind, index, size);
    Frame {
        kind,
        index,
        capture_time,
        rtp_timestamp: rtp_timestamp_at(capture_time, kind.clock_rate()),
        size,
        payload_digest: fnv1a64(&payload),
    }
}

impl MediaTimeline {
    pub fn frames(&self, kind: MediaKind) -> &[Frame] {
        match kind {
            MediaKind::Video => &self.video_frames,
            MediaKind::Audio => &self.audio_frames,
        }
    }

    pub fn payload(&self, frame: &Frame) -> Vec<u8> {
        synthetic_payload(&self.profile.source_id, frame.kind, frame.index, frame.size)
    }

    /// Both streams merged by capture time, video first on ties.
    pub fn schedule(&self) -> Vec<&Frame> {
        let mut all: Vec<&Frame> = self.video_frames.iter().chain(&self.audio_frames).collect();
        all.sort_by_key(|f| (f.capture_time, f.kind, f.index));
        all
    }

    pub fn is_empty(&self) -> bool {
        self.video_frames.is_empty() && self.audio_frames.is_empty()
    }

    /// Writes one JSON record per frame, video stream first.
    pub fn write_manifest<W: Write>(&self, mut out: W) -> Result<()> {
        for frame in self.video_frames.iter().chain(&self.audio_frames) {
            serde_json::to_writer(&mut out, &ManifestRecord::from(frame))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// One line of a timeline manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub kind: MediaKind,
    pub index: u32,
    pub rtp_timestamp: u32,
    pub size: usize,
    pub digest: String,
}

impl From<&Frame> for ManifestRecord {
    fn from(f: &Frame) -> Self {
        ManifestRecord {
            kind: f.kind,
            index: f.index,
            rtp_timestamp: f.rtp_timestamp,
            size: f.size,
            digest: format!("{:016x}", f.payload_digest),
        }
    }
}

/// Payload bytes for a frame, a pure function of `(source_id, kind, index)`.
pub fn synthetic_payload(source_id: &str, kind: MediaKind, index: u32, size: usize) -> Vec<u8> {
    let mut key = Vec::with_capacity(source_id.len() + 6);
    key.extend_from_slice(source_id.as_bytes());
    key.push(0);
    key.push(kind as u8);
    key.extend_from_slice(&index.to_be_bytes());
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(&key));
    let mut buf = vec![0u8; size];
    rng.fill_bytes(&mut buf);
    buf
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Next RTP sequence number to hand out; wraps at 2^16.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceCursor(u16);

impl SequenceCursor {
    pub fn new(start: u16) -> Self {
        SequenceCursor(start)
    }

    pub fn peek(&self) -> u16 {
        self.0
    }

    pub fn next_seq(&mut self) -> u16 {
        let seq = self.0;
        self.0 = self.0.wrapping_add(1);
        seq
    }
}

/// Per-fragment descriptor carried at the start of each RTP payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FragmentHeader {
    pub frame_index: u32,
    pub fragment_index: u16,
    pub fragment_count: u16,
    pub digest: u64,
}

impl FragmentHeader {
    pub fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.frame_index.to_be_bytes());
        out.extend_from_slice(&self.fragment_index.to_be_bytes());
        out.extend_from_slice(&self.fragment_count.to_be_bytes());
        out.extend_from_slice(&self.digest.to_be_bytes());
    }

    pub fn parse(payload: &[u8]) -> Result<(FragmentHeader, &[u8])> {
        if payload.len() < FRAGMENT_HEADER_LEN {
            return Err(Error::protocol(format!(
                "payload of {} bytes is shorter than the fragment header",
                payload.len()
            )));
        }
        let (head, body) = payload.split_at(FRAGMENT_HEADER_LEN);
        let header = FragmentHeader {
            frame_index: u32::from_be_bytes(head[0..4].try_into().unwrap()),
            fragment_index: u16::from_be_bytes(head[4..6].try_into().unwrap()),
            fragment_count: u16::from_be_bytes(head[6..8].try_into().unwrap()),
            digest: u64::from_be_bytes(head[8..16].try_into().unwrap()),
        };
        if header.fragment_count == 0 || header.fragment_index >= header.fragment_count {
            return Err(Error::protocol(format!(
                "fragment {} of {} is out of range",
                header.fragment_index, header.fragment_count
            )));
        }
        Ok((header, body))
    }
}

/// Media bytes per packet for a given MTU.
pub fn payload_capacity(mtu: usize) -> Result<usize> {
    if mtu < MIN_MTU {
        return Err(Error::config(format!("mtu {mtu} is below the minimum of {MIN_MTU} bytes")));
    }
    Ok(mtu - RTP_HEADER_LEN - FRAGMENT_HEADER_LEN)
}

/// Splits a frame into RTP packets. All fragments carry the frame's
/// timestamp; only the last one has the marker bit.
pub fn packetize_frame(
    frame: &Frame,
    payload: &[u8],
    mtu: usize,
    ssrc: u32,
    cursor: &mut SequenceCursor,
) -> Result<Vec<RtpPacket>> {
    let capacity = payload_capacity(mtu)?;
    if payload.len() != frame.size || payload.is_empty() {
        return Err(Error::config(format!(
            "payload of {} bytes does not match frame size {}",
            payload.len(),
            frame.size
        )));
    }
    let count = payload.len().div_ceil(capacity);
    let fragment_count = u16::try_from(count)
        .map_err(|_| Error::config(format!("frame of {} bytes needs {count} fragments", frame.size)))?;

    Ok(payload
        .chunks(capacity)
        .enumerate()
        .map(|(i, chunk)| {
            let mut body = Vec::with_capacity(FRAGMENT_HEADER_LEN + chunk.len());
            FragmentHeader {
                frame_index: frame.index,
                fragment_index: i as u16,
                fragment_count,
                digest: frame.payload_digest,
            }
            .write(&mut body);
            body.extend_from_slice(chunk);
            RtpPacket {
                marker: i + 1 == count,
                payload_type: frame.kind.payload_type(),
                sequence: cursor.next_seq(),
                timestamp: frame.rtp_timestamp,
                ssrc,
                payload: body,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reassembly {
    Complete {
        frame_index: u32,
        payload: Vec<u8>,
        digest_ok: bool,
    },
    /// `missing` is `None` when the input carried no fragments at all.
    Partial {
        frame_index: Option<u32>,
        missing: Option<usize>,
    },
}

impl Reassembly {
    pub fn is_complete(&self) -> bool {
        matches!(self, Reassembly::Complete { .. })
    }
}

/// Puts a frame back together from the fragments that arrived. Fragments may
/// be given in any order; duplicates are ignored.
pub fn reassemble_frame(fragments: &[RtpPacket]) -> Result<Reassembly> {
    let Some(first) = fragments.first() else {
        return Ok(Reassembly::Partial {
            frame_index: None,
            missing: None,
        });
    };
    if let Some(other) = fragments.iter().find(|p| p.timestamp != first.timestamp) {
        return Err(Error::protocol(format!(
            "fragments mix timestamps {} and {}",
            first.timestamp, other.timestamp
        )));
    }

    let mut parsed = Vec::with_capacity(fragments.len());
    for packet in fragments {
        let (header, body) = FragmentHeader::parse(&packet.payload)?;
        parsed.push((header, body, packet.marker));
    }
    let expected = parsed[0].0;
    if let Some((h, ..)) = parsed
        .iter()
        .find(|(h, ..)| h.frame_index != expected.frame_index || h.fragment_count != expected.fragment_count)
    {
        return Err(Error::protocol(format!(
            "fragment header {h:?} disagrees with {expected:?} for one timestamp"
        )));
    }

    let count = usize::from(expected.fragment_count);
    let mut slots: Vec<Option<(&[u8], bool)>> = vec![None; count];
    for (header, body, marker) in parsed {
        slots[usize::from(header.fragment_index)].get_or_insert((body, marker));
    }
    let missing = slots.iter().filter(|s| s.is_none()).count();
    let marker_on_last = matches!(slots.last(), Some(Some((_, true))));
    if missing > 0 || !marker_on_last {
        return Ok(Reassembly::Partial {
            frame_index: Some(expected.frame_index),
            missing: Some(missing),
        });
    }

    let payload: Vec<u8> = slots.into_iter().flatten().flat_map(|(body, _)| body.iter().copied()).collect();
    Ok(Reassembly::Complete {
        frame_index: expected.frame_index,
        digest_ok: fnv1a64(&payload) == expected.digest,
        payload,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(fps: f64, duration: f64) -> MediaProfile {
        MediaProfile::new("t01", Resolution::R720p, Tier::MQ, 2000.0, fps, 24.0, duration)
    }

    fn frame_of_size(size: usize) -> (Frame, Vec<u8>) {
        let payload = synthetic_payload("t01", MediaKind::Video, 7, size);
        let frame = Frame {
            kind: MediaKind::Video,
            index: 7,
            capture_time: Duration::from_millis(280),
            rtp_timestamp: 25_200,
            size,
            payload_digest: fnv1a64(&payload),
        };
        (frame, payload)
    }

    #[test]
    fn six_builtin_profiles_cover_resolutions_and_tiers() {
        let profiles = MediaProfile::builtin();
        assert_eq!(profiles.len(), 6);
        for r in Resolution::ALL {
            for t in Tier::ALL {
                assert_eq!(
                    profiles.iter().filter(|p| p.resolution == r && p.tier == t).count(),
                    1
                );
            }
        }
        for p in &profiles {
            p.validate().unwrap();
            assert_eq!(p.video_clock_rate, 90_000);
            assert_eq!(p.audio_clock_rate, 16_000);
        }
        assert_eq!(profiles[0].source_id, "s01");
        assert_eq!(profiles[0].resolution, Resolution::R1080p);
        assert_eq!(profiles[0].tier, Tier::HQ);
    }

    #[test]
    fn frame_counts_follow_rate_and_duration() {
        let tl = generate_timeline(&profile(25.0, 10.0), 3).unwrap();
        assert_eq!(tl.video_frames.len(), 250);
        assert_eq!(tl.audio_frames.len(), 500);
    }

    #[test]
    fn audio_frames_are_evenly_spaced() {
        let tl = generate_timeline(&profile(25.0, 2.0), 3).unwrap();
        for (i, f) in tl.audio_frames.iter().enumerate() {
            assert_eq!(f.capture_time, Duration::from_millis(20 * i as u64));
            assert_eq!(f.rtp_timestamp, 320 * i as u32);
            assert_eq!(f.size, 60);
        }
    }

    #[test]
    fn video_mean_frame_size_matches_bitrate() {
        let mut p = profile(25.0, 60.0);
        p.video_bitrate = 4000.0;
        let tl = generate_timeline(&p, 1).unwrap();
        // oracle: plain average of the generated sizes against 4000e3/8/25
        let total: usize = tl.video_frames.iter().map(|f| f.size).sum();
        let mean = total as f64 / tl.video_frames.len() as f64;
        assert!((mean - 20_000.0).abs() <= 0.05 * 20_000.0, "mean {mean}");
        assert!(tl.video_frames.iter().all(|f| f.size >= 4000 && f.size <= 100_000));
    }

    #[test]
    fn timeline_is_deterministic() {
        let p = profile(30.0, 3.0);
        assert_eq!(generate_timeline(&p, 9).unwrap(), generate_timeline(&p, 9).unwrap());
        assert_ne!(
            generate_timeline(&p, 9).unwrap().video_frames,
            generate_timeline(&p, 10).unwrap().video_frames
        );
    }

    #[test]
    fn rejects_non_positive_rates() {
        let mut p = profile(25.0, 1.0);
        p.video_bitrate = 0.0;
        assert!(matches!(generate_timeline(&p, 0), Err(Error::Config(_))));
        let mut p = profile(25.0, 1.0);
        p.video_fps = -1.0;
        assert!(generate_timeline(&p, 0).is_err());
        let mut p = profile(25.0, 1.0);
        p.audio_clock_rate = 8000;
        assert!(generate_timeline(&p, 0).is_err());
    }

    #[test]
    fn rtp_timestamps_match_capture_times() {
        let tl = generate_timeline(&profile(29.97, 5.0), 1).unwrap();
        for f in &tl.video_frames {
            let expected = (f.capture_time.as_secs_f64() * 90_000.0).round() as u64 % (1 << 32);
            assert_eq!(u64::from(f.rtp_timestamp), expected);
        }
    }

    #[test]
    fn three_fragments_for_3000_bytes() {
        let (frame, payload) = frame_of_size(3000);
        let mut cursor = SequenceCursor::new(10);
        let packets = packetize_frame(&frame, &payload, DEFAULT_MTU, 1, &mut cursor).unwrap();
        assert_eq!(packets.len(), 3);
        assert_eq!(packets.iter().map(|p| p.marker).collect::<Vec<_>>(), [false, false, true]);
        assert_eq!(packets.iter().map(|p| p.sequence).collect::<Vec<_>>(), [10, 11, 12]);
        assert!(packets.iter().all(|p| p.timestamp == 25_200));
        assert_eq!(cursor.peek(), 13);
    }

    #[test]
    fn small_frame_is_one_marked_packet() {
        let (frame, payload) = frame_of_size(100);
        let packets =
            packetize_frame(&frame, &payload, DEFAULT_MTU, 1, &mut SequenceCursor::new(0)).unwrap();
        assert_eq!(packets.len(), 1);
        assert!(packets[0].marker);
    }

    #[test]
    fn sequence_wraps_across_fragments() {
        let (frame, payload) = frame_of_size(2000);
        let mut cursor = SequenceCursor::new(65535);
        let packets = packetize_frame(&frame, &payload, DEFAULT_MTU, 1, &mut cursor).unwrap();
        assert_eq!(packets.iter().map(|p| p.sequence).collect::<Vec<_>>(), [65535, 0]);
    }

    #[test]
    fn tiny_mtu_is_rejected() {
        let (frame, payload) = frame_of_size(100);
        let err = packetize_frame(&frame, &payload, 63, 1, &mut SequenceCursor::new(0)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn reassembles_complete_frame() {
        let (frame, payload) = frame_of_size(3000);
        let packets =
            packetize_frame(&frame, &payload, DEFAULT_MTU, 1, &mut SequenceCursor::new(0)).unwrap();
        let mut shuffled = packets.clone();
        shuffled.reverse();
        match reassemble_frame(&shuffled).unwrap() {
            Reassembly::Complete { payload: got, digest_ok, frame_index } => {
                assert_eq!(got, payload);
                assert!(digest_ok);
                assert_eq!(frame_index, 7);
            }
            other => panic!("expected complete, got {other:?}"),
        }
    }

    #[test]
    fn missing_middle_fragment_is_partial() {
        let (frame, payload) = frame_of_size(3000);
        let packets =
            packetize_frame(&frame, &payload, DEFAULT_MTU, 1, &mut SequenceCursor::new(0)).unwrap();
        let r = reassemble_frame(&[packets[0].clone(), packets[2].clone()]).unwrap();
        assert_eq!(
            r,
            Reassembly::Partial {
                frame_index: Some(7),
                missing: Some(1)
            }
        );
    }

    #[test]
    fn empty_input_is_degenerate_partial() {
        assert_eq!(
            reassemble_frame(&[]).unwrap(),
            Reassembly::Partial {
                frame_index: None,
                missing: None
            }
        );
    }

    #[test]
    fn mixed_timestamps_are_a_protocol_error() {
        let (frame, payload) = frame_of_size(3000);
        let mut packets =
            packetize_frame(&frame, &payload, DEFAULT_MTU, 1, &mut SequenceCursor::new(0)).unwrap();
        packets[1].timestamp += 1;
        assert!(matches!(reassemble_frame(&packets), Err(Error::Protocol(_))));
    }

    #[test]
    fn corrupted_payload_fails_digest() {
        let (frame, payload) = frame_of_size(500);
        let mut packets =
            packetize_frame(&frame, &payload, DEFAULT_MTU, 1, &mut SequenceCursor::new(0)).unwrap();
        let last = packets[0].payload.len() - 1;
        packets[0].payload[last] ^= 0xff;
        match reassemble_frame(&packets).unwrap() {
            Reassembly::Complete { digest_ok, .. } => assert!(!digest_ok),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn manifest_has_one_line_per_frame() {
        let tl = generate_timeline(&profile(25.0, 1.0), 1).unwrap();
        let mut buf = Vec::new();
        tl.write_manifest(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 25 + 50);
        let first: ManifestRecord = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(first, ManifestRecord::from(&tl.video_frames[0]));
        assert_eq!(first.digest.len(), 16);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn packetize_then_reassemble_roundtrips(size in 1usize..40_000, mtu in 64usize..2000, start: u16) {
                let (frame, payload) = frame_of_size(size);
                let mut cursor = SequenceCursor::new(start);
                let packets = packetize_frame(&frame, &payload, mtu, 5, &mut cursor).unwrap();
                let capacity = mtu - RTP_HEADER_LEN - FRAGMENT_HEADER_LEN;
                prop_assert_eq!(packets.len(), size.div_ceil(capacity));
                for (i, p) in packets.iter().enumerate() {
                    prop_assert_eq!(p.sequence, start.wrapping_add(i as u16));
                    prop_assert!(p.payload.len() + RTP_HEADER_LEN <= mtu);
                }
                match reassemble_frame(&packets).unwrap() {
                    Reassembly::Complete { payload: got, digest_ok, .. } => {
                        prop_assert!(digest_ok);
                        prop_assert_eq!(got, payload);
                    }
                    other => prop_assert!(false, "{:?}", other),
                }
            }

            #[test]
            fn mean_frame_size_tracks_bitrate(bitrate in 200.0f64..10_000.0, fps in 10.0f64..60.0, seed: u64) {
                let mut p = profile(fps, 5.0);
                p.video_bitrate = bitrate;
                let tl = generate_timeline(&p, seed).unwrap();
                let n = tl.video_frames.len() as f64;
                let mean = tl.video_frames.iter().map(|f| f.size as f64).sum::<f64>() / n;
                prop_assert!((mean * fps - bitrate * 125.0).abs() <= 0.05 * bitrate * 125.0);
            }
        }
    }
}
