use std::collections::{BTreeMap, HashMap};
use std::time::Duration;

use super::packet::RtpPacket;

/// Outcome of offering a packet to the buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Queued,
    Duplicate,
    /// Arrived after its release deadline or behind already released data.
    Late,
}

#[derive(Debug)]
struct Pending {
    packet: RtpPacket,
    deadline: Duration,
}

/// Time-based resequencing buffer.
///
/// Each packet is held until `first_arrival(timestamp) + latency` at most and
/// released in sequence order. Packets that show up after their slot was
/// released are discarded and counted.
#[derive(Debug)]
pub struct JitterBuffer {
    latency: Duration,
    pending: BTreeMap<u64, Pending>,
    first_arrival: HashMap<u32, Duration>,
    highest: Option<u64>,
    last_released: Option<u64>,
    late_discards: u64,
}

impl JitterBuffer {
    pub fn new(latency: Duration) -> Self {
        JitterBuffer {
            latency,
            pending: BTreeMap::new(),
            first_arrival: HashMap::new(),
            highest: None,
            last_released: None,
            late_discards: 0,
        }
    }

    pub fn latency(&self) -> Duration {
        self.latency
    }

    pub fn late_discards(&self) -> u64 {
        self.late_discards
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Maps a 16-bit sequence number onto the 64-bit sequence space closest to
    /// the highest number seen so far.
    fn extend(&self, seq: u16) -> u64 {
        let Some(reference) = self.highest else {
            // Leave room below the first packet for reordered predecessors.
            return (1 << 16) + u64::from(seq);
        };
        let candidate = (reference & !0xffff) | u64::from(seq);
        let diff = candidate as i64 - reference as i64;
        if diff > 0x8000 {
            candidate - (1 << 16)
        } else if diff < -0x8000 {
            candidate + (1 << 16)
        } else {
            candidate
        }
    }

    pub fn push(&mut self, packet: RtpPacket, now: Duration) -> Admission {
        let ext = self.extend(packet.sequence);
        let first = *self.first_arrival.entry(packet.timestamp).or_insert(now);
        let deadline = first + self.latency;
        if self.last_released.is_some_and(|r| ext <= r) || now > deadline {
            self.late_discards += 1;
            return Admission::Late;
        }
        if self.pending.contains_key(&ext) {
            return Admission::Duplicate;
        }
        self.highest = Some(self.highest.map_or(ext, |h| h.max(ext)));
        self.pending.insert(ext, Pending { packet, deadline });
        Admission::Queued
    }

    /// Earliest time at which [`drain`](Self::drain) will release something.
    pub fn next_deadline(&self) -> Option<Duration> {
        self.pending.values().map(|p| p.deadline).min()
    }

    /// Releases every packet whose deadline has passed, together with all
    /// packets that precede it in sequence order.
    pub fn drain(&mut self, now: Duration) -> Vec<RtpPacket> {
        let Some(cut) = self
            .pending
            .iter()
            .filter(|(_, p)| p.deadline <= now)
            .map(|(ext, _)| *ext)
            .max()
        else {
            return Vec::new();
        };
        let rest = self.pending.split_off(&(cut + 1));
        let released = std::mem::replace(&mut self.pending, rest);
        self.last_released = Some(cut);
        self.prune(now);
        released.into_values().map(|p| p.packet).collect()
    }

    /// Releases everything still held, e.g. at end of stream.
    pub fn flush(&mut self) -> Vec<RtpPacket> {
        if let Some((&last, _)) = self.pending.last_key_value() {
            self.last_released = Some(last);
        }
        std::mem::take(&mut self.pending).into_values().map(|p| p.packet).collect()
    }

    fn prune(&mut self, now: Duration) {
        // Timestamps whose slot expired long ago; late packets for them are
        // still caught by the sequence check.
        let horizon = self.latency + Duration::from_secs(2);
        if self.first_arrival.len() > 256 {
            self.first_arrival.retain(|_, t| *t + horizon >= now);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pkt(seq: u16, ts: u32) -> RtpPacket {
        RtpPacket {
            marker: false,
            payload_type: 96,
            sequence: seq,
            timestamp: ts,
            ssrc: 1,
            payload: vec![0],
        }
    }

    fn seqs(v: &[RtpPacket]) -> Vec<u16> {
        v.iter().map(|p| p.sequence).collect()
    }

    fn ms(v: u64) -> Duration {
        Duration::from_millis(v)
    }

    #[test]
    fn zero_latency_releases_immediately() {
        let mut jb = JitterBuffer::new(Duration::ZERO);
        for (i, seq) in [5u16, 6, 7].into_iter().enumerate() {
            assert_eq!(jb.push(pkt(seq, seq.into()), ms(i as u64)), Admission::Queued);
            assert_eq!(seqs(&jb.drain(ms(i as u64))), vec![seq]);
        }
        assert!(jb.is_empty());
    }

    #[test]
    fn reordered_within_latency_come_out_sorted() {
        let mut jb = JitterBuffer::new(ms(50));
        jb.push(pkt(3, 3), ms(0));
        jb.push(pkt(1, 1), ms(5));
        jb.push(pkt(2, 2), ms(10));
        assert!(jb.drain(ms(49)).is_empty());
        assert_eq!(jb.next_deadline(), Some(ms(50)));
        assert_eq!(seqs(&jb.drain(ms(60))), vec![1, 2, 3]);
        assert_eq!(jb.late_discards(), 0);
    }

    #[test]
    fn packet_after_its_slot_is_late() {
        let mut jb = JitterBuffer::new(ms(50));
        jb.push(pkt(1, 100), ms(0));
        assert_eq!(seqs(&jb.drain(ms(50))), vec![1]);
        // second fragment of the same frame, latency + 1 ms after the first
        assert_eq!(jb.push(pkt(2, 100), ms(51)), Admission::Late);
        assert_eq!(jb.late_discards(), 1);
        // and anything behind the release point
        assert_eq!(jb.push(pkt(0, 99), ms(52)), Admission::Late);
        assert_eq!(jb.late_discards(), 2);
    }

    #[test]
    fn overdue_packet_pulls_earlier_sequence_with_it() {
        let mut jb = JitterBuffer::new(ms(50));
        jb.push(pkt(11, 2), ms(0));
        jb.push(pkt(10, 1), ms(30));
        // 11 is due at 50 ms, 10 only at 80 ms; order must still hold
        assert_eq!(seqs(&jb.drain(ms(50))), vec![10, 11]);
    }

    #[test]
    fn sequence_wrap_keeps_order() {
        let mut jb = JitterBuffer::new(ms(20));
        jb.push(pkt(0, 2), ms(0));
        jb.push(pkt(65535, 1), ms(1));
        assert_eq!(seqs(&jb.drain(ms(30))), vec![65535, 0]);
    }

    #[test]
    fn duplicates_are_dropped() {
        let mut jb = JitterBuffer::new(ms(20));
        assert_eq!(jb.push(pkt(1, 1), ms(0)), Admission::Queued);
        assert_eq!(jb.push(pkt(1, 1), ms(1)), Admission::Duplicate);
        assert_eq!(jb.flush().len(), 1);
    }
}
