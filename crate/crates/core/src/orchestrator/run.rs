use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::matrix::{ExperimentConfig, Mode};
use super::summary::{summarize_matrix, Configured, Measured, SummaryRow};
use crate::error::{Error, Result};
use crate::media::generate_timeline;
use crate::session::{
    write_received_manifest, write_stats, EosKind, Receiver, ReceiverConfig, ReceiverSummary, Role, Sender, SenderConfig,
    SenderSummary, SessionTopology,
};
use crate::transport::{sim_run, write_trace, SimChannels, SimOutcome, UdpConfig, UdpEndpoint, VirtualClock};

pub const STATS_FILE: &str = "stats.csv";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const RECEIVED_FILE: &str = "received.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MATRIX_SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Ports used by udp-mode runs, which therefore execute one at a time.
    pub udp: UdpConfig,
    /// Skip cells whose artifacts are already complete.
    pub resume: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            udp: UdpConfig::loopback(SessionTopology::default()),
            resume: true,
        }
    }
}

/// Files a completed run leaves under its output name.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub output_name: String,
    pub stats_path: PathBuf,
    pub channel_trace_path: Option<PathBuf>,
    pub received_manifest_path: PathBuf,
    pub summary: SummaryRow,
}

impl RunArtifacts {
    fn files(&self) -> impl Iterator<Item = &Path> {
        [Some(self.stats_path.as_path()), self.channel_trace_path.as_deref(), Some(&self.received_manifest_path)]
            .into_iter()
            .flatten()
    }

    pub fn is_complete(&self) -> bool {
        self.files().all(Path::exists)
    }
}

/// On-disk form of [`RunArtifacts`], with file names relative to the run
/// directory so that output trees can be moved and compared.
#[derive(Serialize, Deserialize)]
struct ArtifactIndex {
    output_name: String,
    stats_file: String,
    channel_trace_file: Option<String>,
    received_manifest_file: String,
    summary: SummaryRow,
}

impl ArtifactIndex {
    fn resolve(self, dir: &Path) -> RunArtifacts {
        RunArtifacts {
            output_name: self.output_name,
            stats_path: dir.join(self.stats_file),
            channel_trace_path: self.channel_trace_file.map(|f| dir.join(f)),
            received_manifest_path: dir.join(self.received_manifest_file),
            summary: self.summary,
        }
    }
}

/// Loads a previous run's artifacts if all of them are present.
pub fn load_artifacts(out_dir: &Path, run_id: &str) -> Option<RunArtifacts> {
    let dir = out_dir.join(run_id);
    let text = fs::read_to_string(dir.join(SUMMARY_FILE)).ok()?;
    let index: ArtifactIndex = serde_json::from_str(&text).ok()?;
    let artifacts = index.resolve(&dir);
    (artifacts.output_name == run_id && artifacts.is_complete()).then_some(artifacts)
}

/// What the endpoints reported at the end of one run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub sender: SenderSummary,
    pub receiver: ReceiverSummary,
    /// Simulation mode only.
    pub sim: Option<SimOutcome>,
}

fn endpoints(config: &ExperimentConfig) -> Result<(Sender, Receiver)> {
    let timeline = generate_timeline(&config.profile, config.sub_seed("media"))?;
    let sender = Sender::new(
        timeline,
        SenderConfig {
            mtu: config.mtu,
            seed: config.sub_seed("sender"),
            ..Default::default()
        },
    )?;
    let receiver = Receiver::new(ReceiverConfig {
        latency: Duration::from_millis(u64::from(config.latency)),
        seed: config.sub_seed("receiver"),
        ..Default::default()
    });
    Ok((sender, receiver))
}

/// Executes one cell in memory without writing anything.
pub fn execute(config: &ExperimentConfig, options: &RunOptions) -> Result<(RunResult, Sender, Receiver)> {
    config.validate()?;
    let (mut sender, mut receiver) = endpoints(config)?;
    let sim = match config.mode {
        Mode::Simulated => {
            let mut channels = SimChannels::new(config.impairment.build_channel()?);
            Some(sim_run(&mut sender, &mut receiver, &mut channels, &mut VirtualClock::new())?)
        }
        Mode::Udp => {
            run_udp_pair(&mut sender, &mut receiver, &options.udp)?;
            None
        }
    };
    let result = RunResult {
        sender: sender.summary(),
        receiver: receiver.summary(),
        sim,
    };
    Ok((result, sender, receiver))
}

fn run_udp_pair(sender: &mut Sender, receiver: &mut Receiver, udp: &UdpConfig) -> Result<()> {
    // Bind both sides before any traffic so no early datagram is lost.
    let rx = UdpEndpoint::bind(Role::Receiver, udp.clone())?;
    let tx = UdpEndpoint::bind(Role::Sender, udp.clone())?;
    thread::scope(|s| {
        let receiving = s.spawn(|| rx.run(receiver));
        let sent = tx.run(sender);
        if let Err(e) = &sent {
            warn!("sender transport failed: {e}");
        }
        let received = receiving
            .join()
            .map_err(|_| Error::Transport("receiver thread panicked".into()))?;
        sent?;
        received.map(|_| ())
    })
}

/// Computes the summary row from the endpoint reports.
pub fn summary_row(config: &ExperimentConfig, result: &RunResult) -> SummaryRow {
    let rx = &result.receiver;
    let expected = rx.video.expected + rx.audio.expected;
    let lost = (rx.video.cumulative_lost.max(0) + rx.audio.cumulative_lost.max(0)) as u64;
    let sent = result.sender.video.packets_sent + result.sender.audio.packets_sent;
    let measured_loss_percent = if expected > 0 {
        100.0 * lost as f64 / expected as f64
    } else if sent > 0 {
        100.0
    } else {
        0.0
    };
    let payload_bits: u64 = rx.frames.iter().map(|f| f.received_bytes as u64 * 8).sum();
    let imp = &config.impairment;
    SummaryRow::ok(
        &config.run_id,
        Configured {
            plr: imp.plr,
            delay: imp.delay,
            jitter: imp.jitter,
            bandwidth: imp.bandwidth,
            latency: config.latency,
        },
        Measured {
            measured_loss_percent,
            final_jitter_clock_units: rx.video.final_jitter,
            effective_bitrate_kbit: payload_bits as f64 / config.profile.duration / 1000.0,
            frames_complete: rx.frames_complete(),
            frames_partial: rx.frames_partial(),
            late_discards: rx.video.late_discards + rx.audio.late_discards,
            eos_kind: rx.eos.unwrap_or(EosKind::Timeout),
        },
    )
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Runs one cell and persists its artifacts under `out_dir/<run_id>/`.
/// With `resume`, a cell whose artifacts are complete is not run again.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path, options: &RunOptions) -> Result<RunArtifacts> {
    let wrap = |source: Error| Error::Run {
        run_id: config.run_id.clone(),
        source: Box::new(source),
    };
    if options.resume {
        if let Some(done) = load_artifacts(out_dir, &config.run_id) {
            info!("{}: complete, skipping", config.run_id);
            return Ok(done);
        }
    }
    let (result, sender, receiver) = execute(config, options).map_err(wrap)?;
    persist(config, out_dir, &result, &sender, &receiver).map_err(wrap)
}

fn persist(
    config: &ExperimentConfig,
    out_dir: &Path,
    result: &RunResult,
    sender: &Sender,
    receiver: &Receiver,
) -> Result<RunArtifacts> {
    let dir = out_dir.join(&config.run_id);
    fs::create_dir_all(&dir)?;
    // A stale summary must not make a half-written directory look complete.
    let summary_path = dir.join(SUMMARY_FILE);
    if summary_path.exists() {
        fs::remove_file(&summary_path)?;
    }

    write_stats(receiver.stats_records(), create(&dir.join(STATS_FILE))?)?;
    write_received_manifest(Some(sender.timeline()), &result.receiver.frames, create(&dir.join(RECEIVED_FILE))?)?;
    let channel_trace_file = match &result.sim {
        Some(sim) => {
            write_trace(&sim.trace, create(&dir.join(TRACE_FILE))?)?;
            Some(TRACE_FILE.to_string())
        }
        None => None,
    };
    let index = ArtifactIndex {
        output_name: config.run_id.clone(),
        stats_file: STATS_FILE.into(),
        channel_trace_file,
        received_manifest_file: RECEIVED_FILE.into(),
        summary: summary_row(config, result),
    };
    let tmp = dir.join(format!("{SUMMARY_FILE}.tmp"));
    {
        let mut w = create(&tmp)?;
        serde_json::to_writer_pretty(&mut w, &index)?;
        w.write_all(b"\n")?;
        w.flush()?;
    }
    fs::rename(&tmp, &summary_path)?;
    Ok(index.resolve(&dir))
}

/// Runs every cell, recording a failure row for cells that error, and
/// writes `summary.csv` in matrix order. Simulated cells run in parallel.
pub fn run_matrix(configs: &[ExperimentConfig], out_dir: &Path, options: &RunOptions) -> Result<Vec<SummaryRow>> {
    fs::create_dir_all(out_dir)?;
    let one = |config: &ExperimentConfig| match run_experiment(config, out_dir, options) {
        Ok(artifacts) => artifacts.summary,
        Err(e) => {
            warn!("{e}");
            SummaryRow::failed(&config.run_id, e)
        }
    };
    let parallel = configs.iter().all(|c| c.mode == Mode::Simulated);
    let rows: Vec<SummaryRow> = if parallel {
        configs.par_iter().map(one).collect()
    } else {
        configs.iter().map(one).collect()
    };
    summarize_matrix(&rows, create(&out_dir.join(MATRIX_SUMMARY_FILE))?)?;
    Ok(rows)
}

/// Rebuilds the summary table from artifacts on disk, in matrix order.
pub fn collect_summaries(configs: &[ExperimentConfig], out_dir: &Path) -> Vec<SummaryRow> {
    configs
        .iter()
        .map(|c| match load_artifacts(out_dir, &c.run_id) {
            Some(a) => a.summary,
            None => SummaryRow::failed(&c.run_id, "artifacts missing or incomplete"),
        })
        .collect()
}
