//! Experiment matrices, run naming, execution and artifact persistence.

mod matrix;
mod naming;
mod run;
mod summary;

pub use matrix::{derive_seed, expand_matrix, Axes, BandwidthValue, Defaults, ExperimentConfig, MatrixSpec, Mode};
pub use naming::{decode_filename, encode_filename, RunName};
pub use run::{
    collect_summaries, execute, load_artifacts, run_experiment, run_matrix, summary_row, RunArtifacts, RunOptions,
    RunResult, MATRIX_SUMMARY_FILE, RECEIVED_FILE, STATS_FILE, SUMMARY_FILE, TRACE_FILE,
};
pub use summary::{summarize_matrix, Configured, Measured, RunStatus, SummaryRow, SUMMARY_COLUMNS};
