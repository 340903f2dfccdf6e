use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::naming::{encode_filename, RunName};
use crate::error::{Error, Result};
use crate::impairment::{ImpairmentConfig, DEFAULT_QUEUE_LIMIT};
use crate::media::{fnv1a64, MediaProfile, DEFAULT_MTU};
use crate::session::DEFAULT_LATENCY_MS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    #[serde(alias = "sim")]
    Simulated,
    Udp,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sim" | "simulated" => Ok(Mode::Simulated),
            "udp" => Ok(Mode::Udp),
            _ => Err(Error::config(format!("unknown mode `{s}`, expected sim or udp"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Simulated => "sim",
            Mode::Udp => "udp",
        })
    }
}

/// One matrix cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Also the output name.
    pub run_id: String,
    pub profile: MediaProfile,
    pub impairment: ImpairmentConfig,
    /// Receiver jitter-buffer latency, ms.
    pub latency: u32,
    pub mode: Mode,
    pub seed: u64,
    pub mtu: usize,
}

/// Per-run seed: a hash of the master seed and the run id.
pub fn derive_seed(master_seed: u64, run_id: &str) -> u64 {
    let mut bytes = master_seed.to_le_bytes().to_vec();
    bytes.extend_from_slice(run_id.as_bytes());
    fnv1a64(&bytes)
}

impl ExperimentConfig {
    pub fn new(profile: MediaProfile, impairment: ImpairmentConfig, latency: u32, master_seed: u64) -> Result<Self> {
        let name = RunName {
            source_id: profile.source_id.clone(),
            resolution: profile.resolution,
            tier: profile.tier,
            plr: impairment.plr,
            delay: impairment.delay,
            jitter: impairment.jitter,
            bandwidth: impairment.bandwidth,
            latency,
        };
        let run_id = encode_filename(&name)?;
        let seed = derive_seed(master_seed, &run_id);
        let config = ExperimentConfig {
            impairment: ImpairmentConfig {
                seed: derive_seed(seed, "channel"),
                ..impairment
            },
            run_id,
            profile,
            latency,
            mode: Mode::Simulated,
            seed,
            mtu: DEFAULT_MTU,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        self.impairment.validate()?;
        if self.mode == Mode::Udp && !self.impairment.is_identity() {
            return Err(Error::config(format!(
                "{}: udp mode carries no impairment; use sim mode for impaired cells",
                self.run_id
            )));
        }
        Ok(())
    }

    pub fn sub_seed(&self, label: &str) -> u64 {
        derive_seed(self.seed, label)
    }
}

/// A bandwidth axis entry: kbit/s, or `"none"` for an unshaped link.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum BandwidthValue {
    Kbit(f64),
    Label(String),
}

impl BandwidthValue {
    fn resolve(&self) -> Result<Option<f64>> {
        match self {
            BandwidthValue::Kbit(v) => Ok(Some(*v)),
            BandwidthValue::Label(s) if s.eq_ignore_ascii_case("none") || s == "NA" => Ok(None),
            BandwidthValue::Label(s) => Err(Error::config(format!("bandwidth `{s}` is neither a number nor \"none\""))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axes {
    /// Source ids; the built-in six when absent.
    pub sources: Option<Vec<String>>,
    #[serde(default = "zero_axis")]
    pub plr: Vec<f64>,
    #[serde(default = "zero_axis")]
    pub delay: Vec<f64>,
    #[serde(default = "zero_axis")]
    pub jitter: Vec<f64>,
    #[serde(default = "none_axis")]
    pub bandwidth: Vec<BandwidthValue>,
    #[serde(default = "latency_axis")]
    pub latency: Vec<u32>,
}

fn zero_axis() -> Vec<f64> {
    vec![0.0]
}

fn none_axis() -> Vec<BandwidthValue> {
    vec![BandwidthValue::Label("none".into())]
}

fn latency_axis() -> Vec<u32> {
    vec![DEFAULT_LATENCY_MS]
}

impl Default for Axes {
    fn default() -> Self {
        Axes {
            sources: None,
            plr: zero_axis(),
            delay: zero_axis(),
            jitter: zero_axis(),
            bandwidth: none_axis(),
            latency: latency_axis(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Defaults {
    #[serde(default = "default_queue_limit")]
    pub queue_limit: usize,
    #[serde(default = "default_mtu")]
    pub mtu: usize,
}

fn default_queue_limit() -> usize {
    DEFAULT_QUEUE_LIMIT
}

fn default_mtu() -> usize {
    DEFAULT_MTU
}

impl Default for Defaults {
    fn default() -> Self {
        Defaults {
            queue_limit: DEFAULT_QUEUE_LIMIT,
            mtu: DEFAULT_MTU,
        }
    }
}

/// Declarative experiment matrix, usually read from a TOML file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub mode: Mode,
    /// Overrides every profile's duration, seconds.
    pub duration: Option<f64>,
    #[serde(default)]
    pub axes: Axes,
    #[serde(default)]
    pub defaults: Defaults,
    /// Extra sources, referenced from `axes.sources` by id.
    #[serde(default)]
    pub profiles: Vec<MediaProfile>,
}

impl MatrixSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("matrix file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read matrix file {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    fn profile(&self, id: &str) -> Result<MediaProfile> {
        self.profiles
            .iter()
            .find(|p| p.source_id == id)
            .cloned()
            .or_else(|| MediaProfile::builtin_by_id(id))
            .ok_or_else(|| Error::config(format!("unknown source `{id}`")))
    }
}

fn non_empty<T>(name: &str, axis: &[T]) -> Result<()> {
    if axis.is_empty() {
        return Err(Error::config(format!("matrix axis `{name}` is empty")));
    }
    Ok(())
}

/// Full Cartesian product in axis order: sources, plr, delay, jitter,
/// bandwidth, latency (last varies fastest).
pub fn expand_matrix(spec: &MatrixSpec) -> Result<Vec<ExperimentConfig>> {
    let axes = &spec.axes;
    let sources: Vec<MediaProfile> = match &axes.sources {
        Some(ids) => ids.iter().map(|id| spec.profile(id)).collect::<Result<_>>()?,
        None => MediaProfile::builtin(),
    };
    non_empty("sources", &sources)?;
    non_empty("plr", &axes.plr)?;
    non_empty("delay", &axes.delay)?;
    non_empty("jitter", &axes.jitter)?;
    non_empty("bandwidth", &axes.bandwidth)?;
    non_empty("latency", &axes.latency)?;
    let bandwidths: Vec<Option<f64>> = axes.bandwidth.iter().map(BandwidthValue::resolve).collect::<Result<_>>()?;

    let mut configs = Vec::new();
    let mut seen = HashSet::new();
    for profile in &sources {
        let profile = match spec.duration {
            Some(d) => profile.clone().with_duration(d),
            None => profile.clone(),
        };
        for &plr in &axes.plr {
            for &delay in &axes.delay {
                for &jitter in &axes.jitter {
                    for &bandwidth in &bandwidths {
                        for &latency in &axes.latency {
                            let impairment = ImpairmentConfig {
                                plr,
                                delay,
                                jitter,
                                bandwidth,
                                queue_limit: spec.defaults.queue_limit,
                                seed: 0,
                            };
                            let mut config = ExperimentConfig::new(profile.clone(), impairment, latency, spec.master_seed)?
                                .with_mode(spec.mode);
                            config.mtu = spec.defaults.mtu;
                            config.validate()?;
                            if !seen.insert(config.run_id.clone()) {
                                return Err(Error::config(format!("duplicate run id `{}` in matrix", config.run_id)));
                            }
                            configs.push(config);
                        }
                    }
                }
            }
        }
    }
    Ok(configs)
}
