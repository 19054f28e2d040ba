//! Drives the `adsala` binary as a user would.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn adsala(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adsala"))
        .args(args)
        .env_remove("ADSALA_BUNDLE")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = adsala(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn lines(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn install_predict_bench_report() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let out = root.join("install");
    let out_s = out.to_str().unwrap();
    let common = [
        "install", "--out", out_s, "--count", "40", "--cap-mb", "4", "--threads", "1", "--repeats", "2",
        "--folds", "3", "--eval-trials", "20", "--families", "linear_ols,decision_tree",
    ];
    let table = ok(&common);
    assert!(table.contains("<- selected"), "{table}");
    for f in ["shapes.csv", "dataset.csv", "dataset.csv.meta", "selection.csv", "bundle/adsala.conf", "bundle/model.bin"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    assert_eq!(lines(&out.join("dataset.csv")), 41);
    assert_eq!(lines(&out.join("selection.csv")), 3);

    // a second run resumes from the files already on disk
    let again = ok(&common);
    assert!(again.contains("reusing 40 shapes"), "{again}");
    assert_eq!(lines(&out.join("dataset.csv")), 41);

    let bundle = out.join("bundle");
    let bundle_s = bundle.to_str().unwrap();
    let pred = ok(&["predict", "--bundle", bundle_s, "64", "32", "16"]);
    assert!(pred.starts_with("n_threads,predicted_runtime_s\n1,"), "{pred}");
    assert!(pred.trim_end().ends_with("chosen_threads=1"), "{pred}");

    let big = adsala(&["predict", "--bundle", bundle_s, "4000", "4000", "4000"]);
    assert!(big.status.success());
    assert!(String::from_utf8_lossy(&big.stderr).contains("exceeds the training cap"));

    let bench_dir = root.join("bench");
    let summary = ok(&[
        "bench", "--bundle", bundle_s, "--count", "6", "--seed", "4", "--skip", "40", "--repeats", "2",
        "--out-dir", bench_dir.to_str().unwrap(),
    ]);
    assert!(summary.contains("all"), "{summary}");
    assert_eq!(lines(&bench_dir.join("bench_rows.csv")), 7);

    let report_dir = root.join("report");
    ok(&[
        "report",
        "--dataset",
        out.join("dataset.csv").to_str().unwrap(),
        "--bench",
        bench_dir.join("bench_rows.csv").to_str().unwrap(),
        "--out-dir",
        report_dir.to_str().unwrap(),
    ]);
    for f in ["optimal_threads_histogram.csv", "heatmap.csv", "gflops_vs_footprint.csv"] {
        assert!(report_dir.join(f).exists(), "missing {f}");
    }
    assert_eq!(lines(&report_dir.join("heatmap.csv")), 41);
}

#[test]
fn sample_then_gather_in_worker_processes() {
    let dir = tempfile::tempdir().unwrap();
    let shapes = dir.path().join("shapes.csv");
    let data = dir.path().join("data.csv");
    ok(&["sample", "--count", "5", "--cap-mb", "2", "--seed", "9", "--out", shapes.to_str().unwrap()]);
    assert_eq!(lines(&shapes), 6);
    ok(&["gather", "--shapes", shapes.to_str().unwrap(), "--threads", "1", "--repeats", "2", "--out", data.to_str().unwrap()]);
    let text = fs::read_to_string(&data).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(3) == Some("1")), "{text}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(adsala(&["--help"]).status.code(), Some(0));
    assert_eq!(adsala(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(adsala(&["predict", "--bundle", "x", "0", "1", "1"]).status.code(), Some(1));
    let missing = dir.path().join("nothing");
    let out = adsala(&["predict", "--bundle", missing.to_str().unwrap(), "8", "8", "8"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "m,k,n\n1,2\n").unwrap();
    let out = adsala(&["gather", "--shapes", bad.to_str().unwrap(), "--in-process", "--out", dir.path().join("d.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}
