use std::time::Duration;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Delay/jitter followed by random loss, as a parent delay qdisc with a
/// child loss qdisc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetemParams {
    pub delay: Duration,
    pub jitter: Duration,
    /// Percent in `[0, 100]`.
    pub plr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetemOutcome {
    Dropped,
    Scheduled(Duration),
}

/// Decides the fate of one packet entering at `now`.
///
/// The RNG is always consumed in the same order, one delay draw and then one
/// loss draw, whatever the parameters, so two channels with the same seed and
/// packet sequence make identical decisions.
pub fn netem_apply(now: Duration, params: &NetemParams, rng: &mut ChaCha8Rng) -> NetemOutcome {
    let jitter_ns = params.jitter.as_nanos() as i64;
    let offset_ns: i64 = rng.random_range(-jitter_ns..=jitter_ns);
    let lost = rng.random::<f64>() < params.plr / 100.0;
    if lost {
        return NetemOutcome::Dropped;
    }
    let target = (now + params.delay).as_nanos() as i64 + offset_ns;
    // Negative offsets larger than the delay cannot deliver before entry.
    let deliver = Duration::from_nanos(target.max(now.as_nanos() as i64) as u64);
    NetemOutcome::Scheduled(deliver)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn params(delay_ms: u64, jitter_ms: u64, plr: f64) -> NetemParams {
        NetemParams {
            delay: Duration::from_millis(delay_ms),
            jitter: Duration::from_millis(jitter_ms),
            plr,
        }
    }

    #[test]
    fn fixed_delay_without_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = params(50, 0, 0.0);
        for i in 0..1000u64 {
            let now = Duration::from_millis(i);
            assert_eq!(netem_apply(now, &p, &mut rng), NetemOutcome::Scheduled(now + Duration::from_millis(50)));
        }
    }

    #[test]
    fn full_loss_drops_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = params(10, 5, 100.0);
        assert!((0..1000).all(|_| netem_apply(Duration::ZERO, &p, &mut rng) == NetemOutcome::Dropped));
    }

    #[test]
    fn five_percent_drop_count_matches_bernoulli_replay() {
        let p = params(0, 0, 5.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let drops = (0..20_000)
            .filter(|_| netem_apply(Duration::ZERO, &p, &mut rng) == NetemOutcome::Dropped)
            .count();

        // oracle: replay the same stream, one (discarded) delay draw then a Bernoulli(0.05)
        let mut oracle = ChaCha8Rng::seed_from_u64(7);
        let expected = (0..20_000)
            .filter(|_| {
                let _: i64 = oracle.random_range(0..=0);
                oracle.random::<f64>() < 0.05
            })
            .count();
        assert_eq!(drops, expected);
        // central 99.9% binomial interval: 1000 +/- 3.29 * sqrt(20000 * 0.05 * 0.95)
        let half_width = 3.29 * (20_000.0f64 * 0.05 * 0.95).sqrt();
        assert!((drops as f64 - 1000.0).abs() <= half_width, "drops {drops}");
    }

    #[test]
    fn jitter_stays_within_bounds_and_never_precedes_entry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = params(5, 20, 0.0);
        let now = Duration::from_secs(1);
        for _ in 0..10_000 {
            let NetemOutcome::Scheduled(t) = netem_apply(now, &p, &mut rng) else {
                panic!("unexpected drop")
            };
            assert!(t >= now);
            assert!(t <= now + Duration::from_millis(25));
        }
    }
}
