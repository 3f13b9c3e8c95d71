//! End-to-end runs of the `d2d` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn d2d(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_d2d"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// The single machine-readable error line.
fn error_line(o: &Output) -> serde_json::Value {
    assert!(!o.status.success());
    let text = String::from_utf8(o.stderr.clone()).unwrap();
    let last = text.lines().last().expect("an error line");
    serde_json::from_str(last).expect("error line is JSON")
}

const SMALL: &[&str] = &["--n_cellular", "6", "--n_d2d", "3"];

#[test]
fn gen_then_solve_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let gen = [SMALL, &["gen", "--drop", "1", "--out", "drop.json"]].concat();
    stdout(&d2d(dir.path(), &gen));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("drop.json")).unwrap()).unwrap();
    assert_eq!(doc["topology"]["cellular_pos"].as_array().unwrap().len(), 6);
    assert_eq!(doc["gains"]["g_d2d"].as_array().unwrap().len(), 3);

    let from_file = stdout(&d2d(dir.path(), &["solve", "--topo", "drop.json", "--method", "oracle"]));
    let direct = stdout(&d2d(dir.path(), &[SMALL, &["solve", "--drop", "1", "--method", "oracle"]].concat()));
    assert_eq!(from_file, direct);
    let report: serde_json::Value = serde_json::from_str(&from_file).unwrap();
    assert_eq!(report["method"], "oracle");
    assert_eq!(report["evaluation"]["d2d_utility"].as_array().unwrap().len(), 3);
}

#[test]
fn solve_from_rate_table() {
    let dir = tempfile::tempdir().unwrap();
    stdout(&d2d(dir.path(), &[SMALL, &["gen", "--table", "--out", "t.json"]].concat()));
    let out = stdout(&d2d(dir.path(), &["solve", "--table", "t.json", "--method", "centralized"]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["method"], "centralized");
    assert!(v["objective"].as_f64().unwrap().is_finite());
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("cfg.txt"),
        "# small run\nn_cellular = 6\nn_d2d = 3\ndrops = 5\nmethods = distributed, centralized\n",
    )
    .unwrap();
    let out = stdout(&d2d(dir.path(), &["--config", "cfg.txt", "--drops", "3", "--out_dir", "run", "run"]));
    let lines: Vec<serde_json::Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["method"], "distributed");
    assert_eq!(lines[0]["drops"], 3);
    let rows = fs::read_to_string(dir.path().join("run/drops.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 3 * 2);
    assert_eq!(fs::read_dir(dir.path().join("run/reports")).unwrap().count(), 3);

    // `cdf` rebuilds the same file from the reports.
    stdout(&d2d(dir.path(), &["cdf", "--reports", "run", "--out", "again.csv"]));
    assert_eq!(
        fs::read(dir.path().join("run/cdf.csv")).unwrap(),
        fs::read(dir.path().join("again.csv")).unwrap()
    );
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        SMALL,
        &["--drops", "2", "--sweep_param", "d2d_max_dist_m", "--sweep_values", "10,40,80", "--out_dir", "sw", "sweep"],
    ]
    .concat();
    let out = stdout(&d2d(dir.path(), &args));
    assert_eq!(out.lines().count(), 3);
    let csv = fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "param,value,mean_sum_utility,std,n_drops");
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        stdout(&d2d(dir.path(), &[SMALL, &["--drops", "1", "--set", "seed=7", "--out_dir", name, "run"]].concat()));
    }
    for file in ["drops.csv", "cdf.csv", "reports/drop_00000.json"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(file)).unwrap(),
            fs::read(dir.path().join("b").join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn failures_end_with_a_json_error_line() {
    let dir = tempfile::tempdir().unwrap();
    let e = error_line(&d2d(dir.path(), &["--drops", "0", "run"]));
    assert_eq!(e["error"], "config");
    let e = error_line(&d2d(dir.path(), &["--set", "no_such_key=1", "run"]));
    assert_eq!(e["error"], "config");
    let e = error_line(&d2d(dir.path(), &["solve", "--table", "missing.json"]));
    assert_eq!(e["error"], "io");
    let e = error_line(&d2d(dir.path(), &["frobnicate"]));
    assert_eq!(e["error"], "usage");
    let e = error_line(&d2d(dir.path(), &["solve", "--method", "magic"]));
    assert!(e["message"].as_str().unwrap().contains("magic"));
}
