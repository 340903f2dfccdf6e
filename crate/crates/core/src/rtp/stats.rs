//! Per-source reception statistics: extended sequence tracking,
//! interarrival jitter and reception report construction.

use std::time::Duration;

use super::rtcp::{clamp_cumulative_lost, to_dlsr_units, ReceptionReport};

const SEQ_MOD: u32 = 1 << 16;
const MAX_DROPOUT: u16 = 0x8000;
/// Fractional bits kept in the jitter estimate.
const JITTER_FRAC_BITS: u32 = 16;

/// Returned when a report is requested before any packet arrived.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NotReady;

#[derive(Debug, Clone)]
pub struct SourceStats {
    pub ssrc: u32,
    pub clock_rate: u32,
    pub base_seq: u16,
    pub max_seq: u16,
    /// Number of sequence wraps seen.
    pub cycles: u32,
    pub packets_received: u64,
    /// Fixed point with 16 fractional bits, clock units.
    jitter: u64,
    /// Arrival time of the previous packet in clock units, 16 fractional bits.
    last_arrival: Option<i128>,
    last_timestamp: u32,
    expected_prior: u64,
    received_prior: u64,
    last_sr: Option<(u32, Duration)>,
    initialized: bool,
}

impl SourceStats {
    pub fn new(ssrc: u32, clock_rate: u32) -> Self {
        SourceStats {
            ssrc,
            clock_rate,
            base_seq: 0,
            max_seq: 0,
            cycles: 0,
            packets_received: 0,
            jitter: 0,
            last_arrival: None,
            last_timestamp: 0,
            expected_prior: 0,
            received_prior: 0,
            last_sr: None,
            initialized: false,
        }
    }

    /// Accounts for one received packet.
    pub fn on_packet(&mut self, seq: u16, rtp_timestamp: u32, arrival: Duration) {
        self.track_sequence(seq);
        self.update_jitter(rtp_timestamp, arrival);
        self.packets_received += 1;
    }

    /// Advances the highest sequence number, counting a cycle when the
    /// sequence wraps. Duplicates and late packets leave it unchanged.
    pub fn track_sequence(&mut self, seq: u16) {
        if !self.initialized {
            self.initialized = true;
            self.base_seq = seq;
            self.max_seq = seq;
            return;
        }
        let delta = seq.wrapping_sub(self.max_seq);
        if delta != 0 && delta < MAX_DROPOUT {
            if seq < self.max_seq {
                self.cycles += 1;
            }
            self.max_seq = seq;
        }
    }

    /// Interarrival jitter update, `J += (|D| - J) / 16`. The first packet
    /// only records its transit time.
    pub fn update_jitter(&mut self, rtp_timestamp: u32, arrival: Duration) {
        let arrival_units =
            (arrival.as_nanos() as i128 * i128::from(self.clock_rate) << JITTER_FRAC_BITS) / 1_000_000_000;
        if let Some(last) = self.last_arrival {
            // D = (R_j - R_i) - (S_j - S_i), timestamps compared modulo 2^32
            let ts_delta = i128::from(rtp_timestamp.wrapping_sub(self.last_timestamp) as i32);
            let d = (arrival_units - last) - (ts_delta << JITTER_FRAC_BITS);
            let j = self.jitter as i128;
            self.jitter = (j + (d.abs() - j) / 16) as u64;
        }
        self.last_arrival = Some(arrival_units);
        self.last_timestamp = rtp_timestamp;
    }

    pub fn extended_highest_seq(&self) -> u32 {
        self.cycles.wrapping_mul(SEQ_MOD) | u32::from(self.max_seq)
    }

    pub fn expected(&self) -> u64 {
        if !self.initialized {
            return 0;
        }
        u64::from(self.cycles) * u64::from(SEQ_MOD) + u64::from(self.max_seq) - u64::from(self.base_seq) + 1
    }

    pub fn cumulative_lost(&self) -> i64 {
        self.expected() as i64 - self.packets_received as i64
    }

    /// Jitter in whole clock units, truncated.
    pub fn jitter(&self) -> u32 {
        (self.jitter >> JITTER_FRAC_BITS) as u32
    }

    /// Jitter in clock units including the fractional part.
    pub fn jitter_exact(&self) -> f64 {
        self.jitter as f64 / f64::from(1u32 << JITTER_FRAC_BITS)
    }

    pub fn has_packets(&self) -> bool {
        self.initialized
    }

    /// Remembers a sender report for the LSR/DLSR fields.
    pub fn on_sender_report(&mut self, compact_ntp: u32, arrival: Duration) {
        self.last_sr = Some((compact_ntp, arrival));
    }

    /// Builds a report block and starts a new reporting interval.
    pub fn build_reception_report(&mut self, now: Duration) -> Result<ReceptionReport, NotReady> {
        if !self.initialized {
            return Err(NotReady);
        }
        let expected = self.expected();
        let expected_interval = expected - self.expected_prior;
        let received_interval = self.packets_received - self.received_prior;
        self.expected_prior = expected;
        self.received_prior = self.packets_received;
        let lost_interval = expected_interval as i64 - received_interval as i64;
        let fraction_lost = if expected_interval == 0 || lost_interval <= 0 {
            0
        } else {
            ((lost_interval << 8) / expected_interval as i64).min(255) as u8
        };

        let (last_sr, delay_since_last_sr) = match self.last_sr {
            Some((lsr, at)) => (lsr, to_dlsr_units(now.saturating_sub(at))),
            None => (0, 0),
        };
        Ok(ReceptionReport {
            ssrc: self.ssrc,
            fraction_lost,
            cumulative_lost: clamp_cumulative_lost(self.cumulative_lost()),
            extended_highest_seq: self.extended_highest_seq(),
            jitter: self.jitter(),
            last_sr,
            delay_since_last_sr,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ms(v: u64) -> Duration {
        Duration::from_millis(v)
    }

    #[test]
    fn single_wrap_extends_sequence() {
        let mut s = SourceStats::new(1, 90_000);
        for seq in [65534, 65535, 0, 1] {
            s.track_sequence(seq);
        }
        assert_eq!(s.extended_highest_seq(), 65537);
        assert_eq!(s.cycles, 1);
    }

    #[test]
    fn in_order_without_wrap() {
        let mut s = SourceStats::new(1, 90_000);
        (0..=100).for_each(|q| s.track_sequence(q));
        assert_eq!(s.extended_highest_seq(), 100);
        assert_eq!(s.cycles, 0);
    }

    #[test]
    fn reorder_does_not_cycle() {
        let mut s = SourceStats::new(1, 90_000);
        for seq in [10, 12, 11] {
            s.track_sequence(seq);
        }
        assert_eq!(s.extended_highest_seq(), 12);
        assert_eq!(s.cycles, 0);
        // late packet straddling the wrap
        let mut s = SourceStats::new(1, 90_000);
        for seq in [65535, 1, 0, 65535] {
            s.track_sequence(seq);
        }
        assert_eq!(s.cycles, 1);
        assert_eq!(s.extended_highest_seq(), 65537);
    }

    #[test]
    fn constant_transit_has_zero_jitter() {
        let mut s = SourceStats::new(1, 90_000);
        for i in 0..200u64 {
            // 40 ms frame spacing, fixed 30 ms transit
            s.update_jitter((i * 3600) as u32, ms(i * 40 + 30));
            assert_eq!(s.jitter(), 0);
        }
    }

    #[test]
    fn transit_step_then_decay() {
        let mut s = SourceStats::new(1, 90_000);
        s.update_jitter(0, ms(0));
        s.update_jitter(3600, ms(40));
        assert_eq!(s.jitter_exact(), 0.0);
        // 10 ms extra transit = 900 clock units
        s.update_jitter(7200, ms(90));
        assert!((s.jitter_exact() - 900.0 / 16.0).abs() < 1e-3);
        let mut expected = 900.0 / 16.0;
        for i in 3..40u64 {
            s.update_jitter((i * 3600) as u32, ms(i * 40 + 10));
            expected *= 15.0 / 16.0;
            assert!((s.jitter_exact() - expected).abs() < 1e-3, "step {i}");
        }
    }

    #[test]
    fn jitter_handles_timestamp_wrap() {
        let mut s = SourceStats::new(1, 90_000);
        let start = u32::MAX - 3600;
        for i in 0..10u32 {
            s.update_jitter(start.wrapping_add(i * 3600), ms(u64::from(i) * 40));
        }
        assert_eq!(s.jitter(), 0);
    }

    #[test]
    fn fraction_lost_fixed_point() {
        let mut s = SourceStats::new(1, 90_000);
        let mut received = 0;
        for seq in 0u16..256 {
            s.track_sequence(seq);
            if seq % 4 != 1 {
                s.packets_received += 1;
                received += 1;
            }
        }
        assert_eq!(received, 192);
        let r = s.build_reception_report(ms(0)).unwrap();
        assert_eq!(r.fraction_lost, 64);
        assert_eq!(r.cumulative_lost, 64);
    }

    #[test]
    fn lossless_report_and_interval_reset() {
        let mut s = SourceStats::new(7, 90_000);
        for seq in 100u16..200 {
            s.on_packet(seq, 0, ms(0));
        }
        let r = s.build_reception_report(ms(10)).unwrap();
        assert_eq!((r.fraction_lost, r.cumulative_lost), (0, 0));
        assert_eq!(r.ssrc, 7);
        // next interval: 10 expected, 5 received
        for seq in (200u16..210).step_by(2) {
            s.on_packet(seq, 0, ms(0));
        }
        s.track_sequence(209);
        let r = s.build_reception_report(ms(20)).unwrap();
        assert_eq!(r.fraction_lost, (5 * 256 / 10) as u8);
        assert_eq!(r.cumulative_lost, 5);
    }

    #[test]
    fn duplicates_clamp_fraction_to_zero() {
        let mut s = SourceStats::new(1, 90_000);
        for seq in [1u16, 2, 2, 3, 3] {
            s.on_packet(seq, 0, ms(0));
        }
        let r = s.build_reception_report(ms(0)).unwrap();
        assert_eq!(r.fraction_lost, 0);
        assert_eq!(r.cumulative_lost, -2);
    }

    #[test]
    fn not_ready_before_first_packet() {
        let mut s = SourceStats::new(1, 90_000);
        assert_eq!(s.build_reception_report(ms(0)), Err(NotReady));
    }

    #[test]
    fn dlsr_counts_from_sr_arrival() {
        let mut s = SourceStats::new(1, 90_000);
        s.on_packet(0, 0, ms(0));
        s.on_sender_report(0xabcd, ms(1000));
        let r = s.build_reception_report(ms(1500)).unwrap();
        assert_eq!(r.last_sr, 0xabcd);
        assert_eq!(r.delay_since_last_sr, 32768);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// One cycle per true wrap for a monotone sender.
        #[test]
        fn cycles_match_true_wraps(start: u16, count in 1usize..300_000, step in 1u16..20) {
            let mut s = SourceStats::new(1, 90_000);
            let mut prev_ext = 0;
            for i in 0..count {
                s.track_sequence(start.wrapping_add((i as u64 * u64::from(step)) as u16));
                let ext = s.extended_highest_seq();
                prop_assert!(ext >= prev_ext);
                prev_ext = ext;
            }
            let last = u64::from(start) + (count as u64 - 1) * u64::from(step);
            prop_assert_eq!(u64::from(s.cycles), last >> 16);
        }
    }
}
