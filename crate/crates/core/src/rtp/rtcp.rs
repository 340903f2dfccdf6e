//! RTCP sender reports, receiver reports and BYE, plus compound packets.

use std::time::Duration;

use crate::error::{Error, Result};

pub const PT_SR: u8 = 200;
pub const PT_RR: u8 = 201;
pub const PT_SDES: u8 = 202;
pub const PT_BYE: u8 = 203;

const REPORT_BLOCK_LEN: usize = 24;
const SENDER_INFO_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SenderInfo {
    /// 32.32 fixed-point NTP timestamp.
    pub ntp_time: u64,
    pub rtp_time: u32,
    pub packet_count: u32,
    pub octet_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReceptionReport {
    pub ssrc: u32,
    /// Interval loss as a fraction of 256.
    pub fraction_lost: u8,
    /// 24-bit signed on the wire.
    pub cumulative_lost: i32,
    pub extended_highest_seq: u32,
    /// Clock-rate units.
    pub jitter: u32,
    pub last_sr: u32,
    /// Units of 1/65536 s.
    pub delay_since_last_sr: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RtcpPacket {
    SenderReport {
        ssrc: u32,
        info: SenderInfo,
        reports: Vec<ReceptionReport>,
    },
    ReceiverReport {
        ssrc: u32,
        reports: Vec<ReceptionReport>,
    },
    Bye {
        sources: Vec<u32>,
    },
}

/// Converts a run-relative time to a 32.32 NTP value.
pub fn ntp_from_duration(t: Duration) -> u64 {
    let frac = (u128::from(t.subsec_nanos()) << 32) / 1_000_000_000;
    (t.as_secs() << 32) | frac as u64
}

/// Middle 32 bits of an NTP timestamp, as echoed in `last_sr`.
pub fn compact_ntp(ntp: u64) -> u32 {
    (ntp >> 16) as u32
}

/// Duration expressed in 1/65536 s.
pub fn to_dlsr_units(d: Duration) -> u32 {
    ((d.as_nanos() << 16) / 1_000_000_000).min(u128::from(u32::MAX)) as u32
}

const MAX_CUMULATIVE_LOST: i32 = 0x7f_ffff;
const MIN_CUMULATIVE_LOST: i32 = -0x80_0000;

pub fn clamp_cumulative_lost(lost: i64) -> i32 {
    lost.clamp(i64::from(MIN_CUMULATIVE_LOST), i64::from(MAX_CUMULATIVE_LOST)) as i32
}

impl ReceptionReport {
    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.ssrc.to_be_bytes());
        let lost = clamp_cumulative_lost(i64::from(self.cumulative_lost)) as u32 & 0x00ff_ffff;
        out.extend_from_slice(&((u32::from(self.fraction_lost) << 24) | lost).to_be_bytes());
        out.extend_from_slice(&self.extended_highest_seq.to_be_bytes());
        out.extend_from_slice(&self.jitter.to_be_bytes());
        out.extend_from_slice(&self.last_sr.to_be_bytes());
        out.extend_from_slice(&self.delay_since_last_sr.to_be_bytes());
    }

    fn read(b: &[u8]) -> ReceptionReport {
        let word = |i: usize| u32::from_be_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]]);
        let lost_raw = word(4) & 0x00ff_ffff;
        // sign-extend 24 bits
        let cumulative_lost = ((lost_raw << 8) as i32) >> 8;
        ReceptionReport {
            ssrc: word(0),
            fraction_lost: b[4],
            cumulative_lost,
            extended_highest_seq: word(8),
            jitter: word(12),
            last_sr: word(16),
            delay_since_last_sr: word(20),
        }
    }
}

impl RtcpPacket {
    pub fn encode_into(&self, out: &mut Vec<u8>) -> Result<()> {
        let start = out.len();
        let (count, pt) = match self {
            RtcpPacket::SenderReport { reports, .. } => (reports.len(), PT_SR),
            RtcpPacket::ReceiverReport { reports, .. } => (reports.len(), PT_RR),
            RtcpPacket::Bye { sources } => (sources.len(), PT_BYE),
        };
        if count > 31 {
            return Err(Error::protocol(format!("{count} items do not fit a 5-bit RTCP count")));
        }
        out.push((2 << 6) | count as u8);
        out.push(pt);
        out.extend_from_slice(&[0, 0]);
        match self {
            RtcpPacket::SenderReport { ssrc, info, reports } => {
                out.extend_from_slice(&ssrc.to_be_bytes());
                out.extend_from_slice(&info.ntp_time.to_be_bytes());
                out.extend_from_slice(&info.rtp_time.to_be_bytes());
                out.extend_from_slice(&info.packet_count.to_be_bytes());
                out.extend_from_slice(&info.octet_count.to_be_bytes());
                reports.iter().for_each(|r| r.write(out));
            }
            RtcpPacket::ReceiverReport { ssrc, reports } => {
                out.extend_from_slice(&ssrc.to_be_bytes());
                reports.iter().for_each(|r| r.write(out));
            }
            RtcpPacket::Bye { sources } => {
                sources.iter().for_each(|s| out.extend_from_slice(&s.to_be_bytes()));
            }
        }
        let words = ((out.len() - start) / 4 - 1) as u16;
        out[start + 2..start + 4].copy_from_slice(&words.to_be_bytes());
        Ok(())
    }
}

pub fn encode_compound(packets: &[RtcpPacket]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for p in packets {
        p.encode_into(&mut out)?;
    }
    Ok(out)
}

/// Decodes every packet of a compound datagram. Packet types other than
/// SR, RR and BYE are skipped.
pub fn decode_compound(mut buf: &[u8]) -> Result<Vec<RtcpPacket>> {
    if buf.is_empty() {
        return Err(Error::protocol("empty RTCP datagram"));
    }
    let mut packets = Vec::new();
    while !buf.is_empty() {
        if buf.len() < 4 {
            return Err(Error::protocol("truncated RTCP header"));
        }
        if buf[0] >> 6 != 2 {
            return Err(Error::protocol(format!("unsupported RTCP version {}", buf[0] >> 6)));
        }
        let count = usize::from(buf[0] & 0x1f);
        let pt = buf[1];
        let len = (usize::from(u16::from_be_bytes([buf[2], buf[3]])) + 1) * 4;
        if len > buf.len() {
            return Err(Error::protocol(format!(
                "RTCP length {len} exceeds remaining {} bytes",
                buf.len()
            )));
        }
        let body = &buf[4..len];
        let word = |i: usize| u32::from_be_bytes([body[i], body[i + 1], body[i + 2], body[i + 3]]);
        let need = |n: usize| {
            if body.len() < n {
                Err(Error::protocol(format!("RTCP packet type {pt} truncated")))
            } else {
                Ok(())
            }
        };
        match pt {
            PT_SR => {
                need(4 + SENDER_INFO_LEN + count * REPORT_BLOCK_LEN)?;
                let info = SenderInfo {
                    ntp_time: (u64::from(word(4)) << 32) | u64::from(word(8)),
                    rtp_time: word(12),
                    packet_count: word(16),
                    octet_count: word(20),
                };
                let reports = (0..count)
                    .map(|i| ReceptionReport::read(&body[24 + i * REPORT_BLOCK_LEN..]))
                    .collect();
                packets.push(RtcpPacket::SenderReport {
                    ssrc: word(0),
                    info,
                    reports,
                });
            }
            PT_RR => {
                need(4 + count * REPORT_BLOCK_LEN)?;
                let reports = (0..count)
                    .map(|i| ReceptionReport::read(&body[4 + i * REPORT_BLOCK_LEN..]))
                    .collect();
                packets.push(RtcpPacket::ReceiverReport {
                    ssrc: word(0),
                    reports,
                });
            }
            PT_BYE => {
                need(count * 4)?;
                packets.push(RtcpPacket::Bye {
                    sources: (0..count).map(|i| word(i * 4)).collect(),
                });
            }
            _ => {}
        }
        buf = &buf[len..];
    }
    Ok(packets)
}
