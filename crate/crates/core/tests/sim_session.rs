use std::io::BufRead;

use proptest::prelude::*;
use qoelab::impairment::ImpairmentConfig;
use qoelab::media::{MediaKind, MediaProfile};
use qoelab::orchestrator::{execute, summary_row, ExperimentConfig, RunOptions};
use qoelab::session::Flow;
use qoelab::transport::{write_trace, TraceRecord};

fn config(source: &str, duration: f64, impairment: ImpairmentConfig, seed: u64) -> ExperimentConfig {
    let profile = MediaProfile::builtin_by_id(source).unwrap().with_duration(duration);
    ExperimentConfig::new(profile, impairment, 200, seed).unwrap()
}

/// Lost packets a receiver can observe on one flow, and the size of that window.
fn observable(trace: &[TraceRecord], flow: Flow) -> (u64, u64) {
    let sent: Vec<&TraceRecord> = trace.iter().filter(|r| r.flow == flow).collect();
    let (Some(a), Some(b)) = (
        sent.iter().position(|r| !r.is_dropped()),
        sent.iter().rposition(|r| !r.is_dropped()),
    ) else {
        return (0, 0);
    };
    let window = &sent[a..=b];
    (window.iter().filter(|r| r.is_dropped()).count() as u64, window.len() as u64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Without reordering, reported loss is exactly the channel's drops.
    #[test]
    fn summary_loss_equals_trace_drop_rate(
        source in prop::sample::select(vec!["s02", "s04", "s06"]),
        plr in 0.0f64..20.0,
        delay in 0.0f64..80.0,
        bandwidth in proptest::option::of(3000.0f64..20_000.0),
        seed in any::<u64>(),
    ) {
        let cfg = config(source, 3.0, ImpairmentConfig { plr, delay, bandwidth, ..Default::default() }, seed);
        let (result, ..) = execute(&cfg, &RunOptions::default()).unwrap();
        let trace = &result.sim.as_ref().unwrap().trace;
        let mut drops = 0;
        let mut window = 0;
        for kind in MediaKind::ALL {
            let (d, n) = observable(trace, Flow::Rtp(kind));
            let s = result.receiver.session(kind);
            prop_assert_eq!(s.cumulative_lost, d as i64);
            prop_assert_eq!(s.expected, n);
            drops += d;
            window += n;
        }
        let measured = summary_row(&cfg, &result).measured.unwrap().measured_loss_percent;
        prop_assert_eq!(measured, 100.0 * drops as f64 / window as f64);
    }
}

#[test]
fn trace_lines_are_json_with_fixed_precision_times() {
    let cfg = config(
        "s06",
        1.0,
        ImpairmentConfig {
            plr: 10.0,
            delay: 20.0,
            ..Default::default()
        },
        3,
    );
    let (result, ..) = execute(&cfg, &RunOptions::default()).unwrap();
    let trace = &result.sim.as_ref().unwrap().trace;
    let mut buf = Vec::new();
    write_trace(trace, &mut buf).unwrap();
    let lines: Vec<String> = buf.lines().map(Result::unwrap).collect();
    assert_eq!(lines.len(), trace.len());
    let mut dropped = 0;
    for line in &lines {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let inject = v["inject"].as_str().unwrap();
        assert_eq!(inject.split('.').nth(1).unwrap().len(), 9);
        if v.get("drop").is_some() {
            dropped += 1;
            assert!(v.get("deliver").is_none());
        }
    }
    assert_eq!(dropped, trace.iter().filter(|r| r.is_dropped()).count());
}

#[test]
fn jitter_reorders_but_every_packet_is_accounted_for() {
    let cfg = config(
        "s04",
        3.0,
        ImpairmentConfig {
            delay: 40.0,
            jitter: 30.0,
            ..Default::default()
        },
        9,
    );
    let (result, ..) = execute(&cfg, &RunOptions::default()).unwrap();
    let trace = &result.sim.as_ref().unwrap().trace;
    let video: Vec<&TraceRecord> = trace.iter().filter(|r| r.flow == Flow::Rtp(MediaKind::Video)).collect();
    assert!(video.iter().all(|r| !r.is_dropped()));
    let reordered = video.windows(2).filter(|w| w[1].deliver < w[0].deliver).count();
    assert!(reordered > 0);
    let rx = &result.receiver.video;
    assert_eq!(rx.packets_received, video.len() as u64);
    assert_eq!(rx.cumulative_lost.max(0), 0);
    assert!(rx.final_jitter > 0);
}

#[test]
fn narrow_pipe_drops_at_the_queue_and_stretches_delivery() {
    // 4000 kbit/s of video into a 1000 kbit/s pipe.
    let cfg = config(
        "s04",
        3.0,
        ImpairmentConfig {
            bandwidth: Some(1000.0),
            ..Default::default()
        },
        1,
    );
    let (result, ..) = execute(&cfg, &RunOptions::default()).unwrap();
    let trace = &result.sim.as_ref().unwrap().trace;
    let dropped = trace.iter().filter(|r| r.is_dropped()).count();
    assert!(dropped > 0);
    assert!(result.receiver.video.cumulative_lost > 0);
    let last = trace.iter().filter_map(|r| r.deliver).max().unwrap();
    assert!(last.as_secs_f64() >= 3.0);
}
