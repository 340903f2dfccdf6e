use std::fs;
use std::time::SystemTime;

use qoelab::impairment::ImpairmentConfig;
use qoelab::media::MediaProfile;
use qoelab::orchestrator::{
    collect_summaries, decode_filename, expand_matrix, load_artifacts, run_experiment, run_matrix, summarize_matrix,
    ExperimentConfig, MatrixSpec, RunOptions, RunStatus, MATRIX_SUMMARY_FILE, RECEIVED_FILE, STATS_FILE, SUMMARY_FILE,
    TRACE_FILE,
};
use qoelab::session::EosKind;

const MATRIX: &str = r#"
master_seed = 11
duration = 2.0

[axes]
sources = ["s04", "s06"]
plr = [0, 2]
bandwidth = ["none", 3000]
"#;

fn configs() -> Vec<ExperimentConfig> {
    expand_matrix(&MatrixSpec::from_toml(MATRIX).unwrap()).unwrap()
}

#[test]
fn matrix_run_writes_artifacts_and_summary_in_matrix_order() {
    let dir = tempfile::tempdir().unwrap();
    let configs = configs();
    assert_eq!(configs.len(), 8);
    let rows = run_matrix(&configs, dir.path(), &RunOptions::default()).unwrap();
    assert_eq!(rows.len(), 8);
    for (row, config) in rows.iter().zip(&configs) {
        assert_eq!(row.run_id, config.run_id);
        assert_eq!(row.status, RunStatus::Ok, "{row:?}");
        let run_dir = dir.path().join(&config.run_id);
        for f in [STATS_FILE, TRACE_FILE, RECEIVED_FILE, SUMMARY_FILE] {
            assert!(run_dir.join(f).is_file(), "{} missing {f}", config.run_id);
        }
        let name = decode_filename(&config.run_id).unwrap();
        assert_eq!(name.plr, config.impairment.plr);
        assert_eq!(name.bandwidth, config.impairment.bandwidth);
    }
    let table = fs::read_to_string(dir.path().join(MATRIX_SUMMARY_FILE)).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 9);
    assert!(lines[1].starts_with("s04_720p_HQ_plr0_del0_jit0_bwNA_lat200,ok,"));
    assert!(lines[8].starts_with("s06_720p_LQ_plr2_del0_jit0_bw3000_lat200,ok,"));

    // Rebuilding the table from disk gives the same rows.
    assert_eq!(collect_summaries(&configs, dir.path()), rows);
}

fn mtime(path: &std::path::Path) -> SystemTime {
    fs::metadata(path).unwrap().modified().unwrap()
}

#[test]
fn rerun_skips_complete_cells_and_reproduces_summary() {
    let dir = tempfile::tempdir().unwrap();
    let configs = configs();
    run_matrix(&configs, dir.path(), &RunOptions::default()).unwrap();
    let first = fs::read(dir.path().join(MATRIX_SUMMARY_FILE)).unwrap();

    // Interrupt one cell: its summary is gone, so it must be redone.
    let redo = &configs[3].run_id;
    fs::remove_file(dir.path().join(redo).join(SUMMARY_FILE)).unwrap();
    let kept = dir.path().join(&configs[0].run_id).join(STATS_FILE);
    let kept_before = mtime(&kept);

    run_matrix(&configs, dir.path(), &RunOptions::default()).unwrap();
    assert_eq!(fs::read(dir.path().join(MATRIX_SUMMARY_FILE)).unwrap(), first);
    assert_eq!(mtime(&kept), kept_before);
    assert!(load_artifacts(dir.path(), redo).is_some());
}

#[test]
fn missing_artifact_file_makes_a_cell_incomplete() {
    let dir = tempfile::tempdir().unwrap();
    let config = &configs()[0];
    run_experiment(config, dir.path(), &RunOptions::default()).unwrap();
    assert!(load_artifacts(dir.path(), &config.run_id).is_some());
    fs::remove_file(dir.path().join(&config.run_id).join(RECEIVED_FILE)).unwrap();
    assert!(load_artifacts(dir.path(), &config.run_id).is_none());
}

fn short(source: &str, impairment: ImpairmentConfig) -> ExperimentConfig {
    let profile = MediaProfile::builtin_by_id(source).unwrap().with_duration(3.0);
    ExperimentConfig::new(profile, impairment, 200, 5).unwrap()
}

#[test]
fn identity_channel_run_has_no_loss_and_ends_with_bye() {
    let dir = tempfile::tempdir().unwrap();
    let row = run_experiment(&short("s05", ImpairmentConfig::default()), dir.path(), &RunOptions::default())
        .unwrap()
        .summary;
    let m = row.measured.unwrap();
    assert_eq!(m.measured_loss_percent, 0.0);
    assert_eq!(m.eos_kind, EosKind::Bye);
    assert_eq!(m.frames_partial, 0);
    // 75 video + 150 audio frames in 3 s.
    assert_eq!(m.frames_complete, 225);
    // Frame payload over the stream: the configured video and audio rates.
    assert!((m.effective_bitrate_kbit - 2024.0).abs() < 5.0, "{}", m.effective_bitrate_kbit);
}

#[test]
fn total_loss_ends_by_timeout_with_nothing_complete() {
    let dir = tempfile::tempdir().unwrap();
    let row = run_experiment(&short("s06", ImpairmentConfig::lossy(100.0)), dir.path(), &RunOptions::default())
        .unwrap()
        .summary;
    let m = row.measured.unwrap();
    assert_eq!(m.eos_kind, EosKind::Timeout);
    assert_eq!(m.frames_complete, 0);
    assert_eq!(m.measured_loss_percent, 100.0);
}

#[test]
fn failing_cell_becomes_a_failure_row_without_stopping_the_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let mut configs = configs();
    configs.truncate(3);
    configs[1].mtu = 20;
    let rows = run_matrix(&configs, dir.path(), &RunOptions::default()).unwrap();
    assert_eq!(rows[0].status, RunStatus::Ok);
    assert_eq!(rows[1].status, RunStatus::Failed);
    assert!(rows[1].error.as_deref().unwrap().contains(&configs[1].run_id));
    assert_eq!(rows[2].status, RunStatus::Ok);
    let table = fs::read_to_string(dir.path().join(MATRIX_SUMMARY_FILE)).unwrap();
    assert!(table.lines().nth(2).unwrap().contains(",FAILED,"));
}

#[test]
fn empty_artifact_list_gives_header_only_table() {
    let mut buf = Vec::new();
    summarize_matrix(&[], &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
}
