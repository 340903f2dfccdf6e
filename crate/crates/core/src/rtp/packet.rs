use crate::error::{Error, Result};

pub const RTP_VERSION: u8 = 2;
/// Fixed header without CSRCs or extensions.
pub const RTP_HEADER_LEN: usize = 12;

/// An RTP data packet. The version is always 2 and is not stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RtpPacket {
    pub marker: bool,
    pub payload_type: u8,
    pub sequence: u16,
    pub timestamp: u32,
    pub ssrc: u32,
    pub payload: Vec<u8>,
}

impl RtpPacket {
    pub fn wire_len(&self) -> usize {
        RTP_HEADER_LEN + self.payload.len()
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        if self.payload.is_empty() {
            return Err(Error::protocol("refusing to encode an RTP packet with an empty payload"));
        }
        if self.payload_type > 0x7f {
            return Err(Error::protocol(format!("payload type {} exceeds 7 bits", self.payload_type)));
        }
        let mut out = Vec::with_capacity(self.wire_len());
        out.push(RTP_VERSION << 6);
        out.push((u8::from(self.marker) << 7) | self.payload_type);
        out.extend_from_slice(&self.sequence.to_be_bytes());
        out.extend_from_slice(&self.timestamp.to_be_bytes());
        out.extend_from_slice(&self.ssrc.to_be_bytes());
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    /// Parses a packet. Padding, CSRC lists and header extensions are
    /// accepted and stripped.
    pub fn decode(buf: &[u8]) -> Result<RtpPacket> {
        if buf.len() < RTP_HEADER_LEN {
            return Err(Error::protocol(format!("RTP packet too short: {} bytes", buf.len())));
        }
        let version = buf[0] >> 6;
        if version != RTP_VERSION {
            return Err(Error::protocol(format!("unsupported RTP version {version}")));
        }
        let padding = buf[0] & 0x20 != 0;
        let extension = buf[0] & 0x10 != 0;
        let csrc_count = usize::from(buf[0] & 0x0f);

        let mut offset = RTP_HEADER_LEN + 4 * csrc_count;
        if extension {
            let words = buf
                .get(offset + 2..offset + 4)
                .ok_or_else(|| Error::protocol("truncated RTP header extension"))?;
            offset += 4 + 4 * usize::from(u16::from_be_bytes([words[0], words[1]]));
        }
        let mut end = buf.len();
        if padding {
            let pad = usize::from(*buf.last().unwrap());
            end = end
                .checked_sub(pad)
                .filter(|&e| pad > 0 && e >= offset)
                .ok_or_else(|| Error::protocol("invalid RTP padding"))?;
        }
        if offset > end {
            return Err(Error::protocol("RTP header runs past the end of the packet"));
        }

        Ok(RtpPacket {
            marker: buf[1] & 0x80 != 0,
            payload_type: buf[1] & 0x7f,
            sequence: u16::from_be_bytes([buf[2], buf[3]]),
            timestamp: u32::from_be_bytes([buf[4], buf[5], buf[6], buf[7]]),
            ssrc: u32::from_be_bytes([buf[8], buf[9], buf[10], buf[11]]),
            payload: buf[offset..end].to_vec(),
        })
    }
}

/// Cheap check used to tell RTP from RTCP when both share a socket.
pub fn looks_like_rtcp(buf: &[u8]) -> bool {
    buf.len() >= 2 && buf[0] >> 6 == RTP_VERSION && (200..=204).contains(&buf[1])
}
