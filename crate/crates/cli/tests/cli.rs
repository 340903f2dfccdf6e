use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const MATRIX: &str = r#"
master_seed = 5
duration = 1.5

[axes]
sources = ["s06"]
plr = [0, 3]
"#;

fn qoelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qoelab"))
        .args(args)
        .output()
        .expect("spawn qoelab")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_matrix(dir: &Path, text: &str) -> String {
    let path = dir.join("matrix.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_then_summarize_reproduces_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = write_matrix(dir.path(), MATRIX);
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();

    let run = qoelab(&["run", "--matrix", &matrix, "--out", out_s]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let table = fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("s06_") && lines[1].contains("plr0_"), "{}", lines[1]);
    assert!(lines[2].contains("plr3_"), "{}", lines[2]);

    let again = qoelab(&["summarize", "--matrix", &matrix, "--out", out_s, "--output", "-"]);
    assert_eq!(code(&again), 0);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), table);
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();

    let unknown_axis = write_matrix(dir.path(), "master_seed = 1\n[axes]\nreorder = [1]\n");
    let res = qoelab(&["run", "--matrix", &unknown_axis, "--out", out_s]);
    assert_eq!(code(&res), 1);
    assert!(String::from_utf8_lossy(&res.stderr).contains("reorder"));

    let missing = dir.path().join("absent.toml");
    assert_eq!(code(&qoelab(&["run", "--matrix", missing.to_str().unwrap(), "--out", out_s])), 1);
    assert_eq!(code(&qoelab(&["frobnicate"])), 1);
    assert_eq!(code(&qoelab(&["run", "--bogus"])), 1);
    assert_eq!(code(&qoelab(&["send", "--source", "s99"])), 1);
    assert_eq!(code(&qoelab(&["--help"])), 0);
}

#[test]
fn failed_cells_exit_with_two_and_keep_a_row() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{MATRIX}\n[defaults]\nmtu = 20\n");
    let matrix = write_matrix(dir.path(), &text);
    let out = dir.path().join("out");
    let res = qoelab(&["run", "--matrix", &matrix, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 2, "{}", String::from_utf8_lossy(&res.stderr));
    let table = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(table.matches(",FAILED,").count(), 2, "{table}");
}

#[test]
fn serve_refuses_a_dataset_without_playlists() {
    let dir = tempfile::tempdir().unwrap();
    let res = qoelab(&["serve", "--dataset", dir.path().to_str().unwrap(), "--port", "0"]);
    assert_eq!(code(&res), 1);
    assert!(String::from_utf8_lossy(&res.stderr).contains("s1_p1.txt"));
}
