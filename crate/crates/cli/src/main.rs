use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use log::info;
use qoelab::media::{generate_timeline, MediaProfile, DEFAULT_MTU};
use qoelab::orchestrator::{
    collect_summaries, expand_matrix, run_matrix, summarize_matrix, MatrixSpec, Mode, RunOptions, RunStatus,
    MATRIX_SUMMARY_FILE, RECEIVED_FILE, STATS_FILE,
};
use qoelab::session::{
    write_received_manifest, write_stats, Receiver, ReceiverConfig, Role, Sender, SenderConfig, SessionTopology,
    DEFAULT_LATENCY_MS,
};
use qoelab::transport::{udp_run, UdpConfig};

/// Streaming quality testbed: experiment runner, UDP endpoints, rating server.
#[derive(Parser)]
#[command(name = "qoelab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expand a matrix file and execute every cell.
    Run {
        /// TOML matrix file.
        #[arg(long)]
        matrix: PathBuf,
        /// Output directory; one folder per run plus summary.csv.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the matrix file's mode (sim or udp).
        #[arg(long)]
        mode: Option<Mode>,
        /// Overrides the matrix file's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Re-run cells even if their artifacts are complete.
        #[arg(long)]
        no_resume: bool,
        #[command(flatten)]
        net: NetArgs,
    },
    /// Stream one source over UDP.
    Send {
        /// Built-in source id (s01..s06).
        #[arg(long, default_value = "s01")]
        source: String,
        /// Seconds; defaults to the profile's duration.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_MTU)]
        mtu: usize,
        #[command(flatten)]
        net: NetArgs,
    },
    /// Receive one stream over UDP and write its statistics.
    Receive {
        /// Directory for stats.csv and received.jsonl.
        #[arg(long)]
        out: PathBuf,
        /// Jitter buffer latency, ms.
        #[arg(long, default_value_t = DEFAULT_LATENCY_MS)]
        latency: u32,
        /// Seconds without media before giving up.
        #[arg(long, default_value_t = 10.0)]
        silence_timeout: f64,
        #[command(flatten)]
        net: NetArgs,
    },
    /// Rebuild summary.csv from the artifacts of a matrix.
    Summarize {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Destination file, `-` for stdout. Defaults to OUT/summary.csv.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Serve the rating API over a dataset directory.
    Serve {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        /// Journal file; defaults to DATASET/ratings.jsonl.
        #[arg(long)]
        journal: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct NetArgs {
    /// Local address for the inbound ports.
    #[arg(long, default_value = "127.0.0.1")]
    bind: IpAddr,
    /// Address of the other endpoint.
    #[arg(long, default_value = "127.0.0.1")]
    peer: IpAddr,
    /// Added to every default port (5000, 5001, 5005, 5002, 5003, 5007).
    #[arg(long, default_value_t = 0)]
    port_offset: u16,
    #[arg(long)]
    video_rtp_port: Option<u16>,
    #[arg(long)]
    video_rtcp_port: Option<u16>,
    #[arg(long)]
    video_rtcp_return_port: Option<u16>,
    #[arg(long)]
    audio_rtp_port: Option<u16>,
    #[arg(long)]
    audio_rtcp_port: Option<u16>,
    #[arg(long)]
    audio_rtcp_return_port: Option<u16>,
}

impl NetArgs {
    fn udp(&self) -> Result<UdpConfig, Failure> {
        let highest = SessionTopology::default().ports().into_iter().max().unwrap_or(0);
        if self.port_offset > u16::MAX - highest {
            return Err(Failure::Config(format!("port offset {} pushes ports past 65535", self.port_offset)));
        }
        let mut t = SessionTopology::with_offset(self.port_offset);
        let set = |slot: &mut u16, v: Option<u16>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut t.video_rtp_port, self.video_rtp_port);
        set(&mut t.video_rtcp_send_port, self.video_rtcp_port);
        set(&mut t.video_rtcp_return_port, self.video_rtcp_return_port);
        set(&mut t.audio_rtp_port, self.audio_rtp_port);
        set(&mut t.audio_rtcp_send_port, self.audio_rtcp_port);
        set(&mut t.audio_rtcp_return_port, self.audio_rtcp_return_port);
        t.validate()?;
        Ok(UdpConfig {
            topology: t,
            bind: self.bind,
            peer: self.peer,
        })
    }
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<qoelab::Error> for Failure {
    fn from(e: qoelab::Error) -> Self {
        let config = match &e {
            qoelab::Error::Run { source, .. } => source.is_config(),
            other => other.is_config() || matches!(other, qoelab::Error::Parse { .. }),
        };
        if config {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<qoelab_rating::RatingError> for Failure {
    fn from(e: qoelab_rating::RatingError) -> Self {
        match e {
            qoelab_rating::RatingError::Dataset(_) | qoelab_rating::RatingError::Journal(_) => {
                Failure::Config(e.to_string())
            }
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load_spec(matrix: &Path, mode: Option<Mode>, seed: Option<u64>) -> Result<MatrixSpec, Failure> {
    let mut spec = MatrixSpec::load(matrix)?;
    if let Some(mode) = mode {
        spec.mode = mode;
    }
    if let Some(seed) = seed {
        spec.master_seed = seed;
    }
    Ok(spec)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Failure::Runtime(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            matrix,
            out,
            mode,
            seed,
            no_resume,
            net,
        } => {
            let spec = load_spec(&matrix, mode, seed)?;
            let configs = expand_matrix(&spec)?;
            info!("{} cells", configs.len());
            let options = RunOptions {
                udp: net.udp()?,
                resume: !no_resume,
            };
            let rows = run_matrix(&configs, &out, &options)?;
            let failed = rows.iter().filter(|r| r.status == RunStatus::Failed).count();
            println!(
                "{} runs, {failed} failed; summary in {}",
                rows.len(),
                out.join(MATRIX_SUMMARY_FILE).display()
            );
            if failed > 0 {
                return Err(Failure::Runtime(format!("{failed} of {} runs failed", rows.len())));
            }
        }
        Command::Send {
            source,
            duration,
            seed,
            mtu,
            net,
        } => {
            let mut profile = MediaProfile::builtin_by_id(&source)
                .ok_or_else(|| Failure::Config(format!("unknown source `{source}`")))?;
            if let Some(d) = duration {
                profile = profile.with_duration(d);
            }
            let timeline = generate_timeline(&profile, seed)?;
            let mut sender = Sender::new(
                timeline,
                SenderConfig {
                    mtu,
                    seed,
                    ..Default::default()
                },
            )?;
            let result = udp_run(Role::Sender, net.udp()?, &mut sender);
            if let Err(e) = &result {
                sender.abort(Duration::ZERO, e.to_string());
            }
            print_json(&sender.summary())?;
            result?;
        }
        Command::Receive {
            out,
            latency,
            silence_timeout,
            net,
        } => {
            if !(silence_timeout.is_finite() && silence_timeout > 0.0) {
                return Err(Failure::Config("silence timeout must be positive".into()));
            }
            let mut receiver = Receiver::new(ReceiverConfig {
                latency: Duration::from_millis(u64::from(latency)),
                silence_timeout: Duration::from_secs_f64(silence_timeout),
                ..Default::default()
            });
            let result = udp_run(Role::Receiver, net.udp()?, &mut receiver);
            fs::create_dir_all(&out)?;
            let summary = receiver.summary();
            write_stats(receiver.stats_records(), BufWriter::new(File::create(out.join(STATS_FILE))?))?;
            write_received_manifest(None, &summary.frames, BufWriter::new(File::create(out.join(RECEIVED_FILE))?))?;
            print_json(&summary)?;
            result?;
        }
        Command::Summarize { matrix, out, output } => {
            let configs = expand_matrix(&load_spec(&matrix, None, None)?)?;
            let rows = collect_summaries(&configs, &out);
            match output.as_deref() {
                Some(p) if p == Path::new("-") => summarize_matrix(&rows, io::stdout().lock())?,
                Some(p) => summarize_matrix(&rows, File::create(p)?)?,
                None => summarize_matrix(&rows, File::create(out.join(MATRIX_SUMMARY_FILE))?)?,
            }
        }
        Command::Serve {
            dataset,
            port,
            bind,
            journal,
        } => {
            let state = qoelab_rating::AppState::open(&dataset, journal)?;
            let addr = SocketAddr::new(bind, port);
            let runtime = tokio::runtime::Runtime::new()?;
            println!("serving {} on http://{addr}", dataset.display());
            runtime.block_on(qoelab_rating::serve(addr, state))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage mistakes are configuration errors; help and version are not errors.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
