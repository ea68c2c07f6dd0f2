use std::path::Path;
use std::process::{Command, Output};

fn hieropt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hieropt")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn csv_rows(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn run_writes_one_row_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let out = hieropt(&["run", "--set", "T=1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(csv_rows(&dir.path().join("trace.csv")), 1);
}

#[test]
fn run_without_out_prints_csv() {
    let out = hieropt(&["run", "--set", "T=5", "--set", "sigma=20"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("t,"));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn multiple_seeds_get_separate_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = hieropt(&["run", "--set", "T=10", "--seeds", "1,2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    for s in [1, 2] {
        assert_eq!(csv_rows(&dir.path().join(format!("trace_seed={s}.csv"))), 10);
    }
}

#[test]
fn config_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "# bilevel smoke run\nproblem = quadratic-bilevel\nalgorithm = ada-bio\ndim_x = 2\ndim_y = 3\nT = 25\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = hieropt(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(csv_rows(&out_dir.join("trace.csv")), 25);
}

#[test]
fn bad_input_exits_with_two() {
    assert_eq!(code(&hieropt(&["run", "--set", "algorithm=bogus"])), 2);
    assert_eq!(code(&hieropt(&["run", "--set", "T"])), 2);
    assert_eq!(code(&hieropt(&["run", "--no-such-flag"])), 2);
    assert_eq!(code(&hieropt(&["frobnicate"])), 2);
    assert_eq!(code(&hieropt(&["run", "--config", "/nonexistent/cfg"])), 2);
    // minimax algorithm on a single-level problem
    assert_eq!(code(&hieropt(&["run", "--set", "problem=quadratic", "--set", "algorithm=tiada"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(code(&hieropt(&["sweep", "--param", "sigma", "--values", "", "--out", d])), 2);
    assert_eq!(code(&hieropt(&["sweep", "--param", "sigma", "--values", "0,20"])), 2);
    assert_eq!(code(&hieropt(&["verify", "--check", "nope"])), 2);
}

#[test]
fn sweep_writes_traces_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = hieropt(&[
        "sweep",
        "--param",
        "sigma",
        "--values",
        "0,20",
        "--seeds",
        "0,1",
        "--set",
        "T=30",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(csv_rows(&dir.path().join("summary.csv")), 4);
    assert_eq!(csv_rows(&dir.path().join("sigma=20_seed=1.csv")), 30);
}

#[test]
fn verify_reports_pass() {
    for check in ["neumann", "recursion", "adagrad"] {
        let out = hieropt(&["verify", "--check", check]);
        assert_eq!(code(&out), 0);
        assert!(String::from_utf8(out.stdout).unwrap().starts_with("PASS"));
    }
}

#[test]
fn help_exits_cleanly() {
    assert_eq!(code(&hieropt(&["--help"])), 0);
}
