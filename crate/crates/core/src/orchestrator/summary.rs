use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::session::EosKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::Ok => "ok",
            RunStatus::Failed => "FAILED",
        })
    }
}

/// Configured network parameters of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configured {
    pub plr: f64,
    pub delay: f64,
    pub jitter: f64,
    pub bandwidth: Option<f64>,
    pub latency: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    /// Both sessions pooled: lost / expected.
    pub measured_loss_percent: f64,
    /// Video session, 90 kHz units.
    pub final_jitter_clock_units: u32,
    /// Received frame payload over the stream duration.
    pub effective_bitrate_kbit: f64,
    pub frames_complete: u64,
    pub frames_partial: u64,
    pub late_discards: u64,
    pub eos_kind: EosKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub run_id: String,
    pub status: RunStatus,
    pub configured: Option<Configured>,
    pub measured: Option<Measured>,
    pub error: Option<String>,
}

impl SummaryRow {
    pub fn ok(run_id: impl Into<String>, configured: Configured, measured: Measured) -> Self {
        SummaryRow {
            run_id: run_id.into(),
            status: RunStatus::Ok,
            configured: Some(configured),
            measured: Some(measured),
            error: None,
        }
    }

    pub fn failed(run_id: impl Into<String>, error: impl fmt::Display) -> Self {
        SummaryRow {
            run_id: run_id.into(),
            status: RunStatus::Failed,
            configured: None,
            measured: None,
            error: Some(error.to_string()),
        }
    }

    fn record(&self) -> Vec<String> {
        let mut fields = vec![self.run_id.clone(), self.status.to_string()];
        match &self.configured {
            Some(c) => fields.extend([
                c.plr.to_string(),
                c.delay.to_string(),
                c.jitter.to_string(),
                c.bandwidth.map_or_else(|| "NA".to_string(), |b| b.to_string()),
                c.latency.to_string(),
            ]),
            None => fields.extend(std::iter::repeat_n(String::new(), 5)),
        }
        match &self.measured {
            Some(m) => fields.extend([
                m.measured_loss_percent.to_string(),
                m.final_jitter_clock_units.to_string(),
                m.effective_bitrate_kbit.to_string(),
                m.frames_complete.to_string(),
                m.frames_partial.to_string(),
                m.late_discards.to_string(),
                m.eos_kind.as_str().to_string(),
            ]),
            None => fields.extend(std::iter::repeat_n(String::new(), 7)),
        }
        fields.push(self.error.clone().unwrap_or_default());
        fields
    }
}

pub const SUMMARY_COLUMNS: [&str; 15] = [
    "run_id",
    "status",
    "plr",
    "delay",
    "jitter",
    "bandwidth",
    "latency",
    "measured_loss_percent",
    "final_jitter_clock_units",
    "effective_bitrate_kbit",
    "frames_complete",
    "frames_partial",
    "late_discards",
    "eos_kind",
    "error",
];

/// Writes the summary table: header, then one row per run in the given order.
pub fn summarize_matrix<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush()?;
    Ok(())
}
