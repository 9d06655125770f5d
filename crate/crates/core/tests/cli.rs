use std::path::Path;
use std::process::{Command, Output};

use dpm_sga::io::{read_trace, write_binary, TRACE_HEADER};
use ndarray::Array2;
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpm-sga"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_summary(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synthetic_run_writes_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.csv");
    let sum = dir.path().join("s.json");
    let out = run(&[
        "--synth",
        "k=3,d=2,n=300,sep=10,spread=1",
        "--iters",
        "20",
        "--trace-out",
        s(&trace),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    // summary went to stdout without --summary-out
    let printed: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(printed["optimizer"], "fisher");

    let text = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().next().unwrap(), TRACE_HEADER.join(","));
    let rows = read_trace(text.as_bytes()).unwrap();
    assert_eq!(rows.len() as u64, printed["iters_run"].as_u64().unwrap());

    let out = run(&[
        "--synth",
        "k=3,d=2,n=300,sep=10,spread=1",
        "--optimizer",
        "mm",
        "--summary-out",
        s(&sum),
    ]);
    assert!(out.status.success());
    let sm = read_summary(&sum);
    for key in [
        "optimizer",
        "seed",
        "k_est",
        "nmi",
        "acc",
        "iters_run",
        "total_time_ms",
    ] {
        assert!(sm.get(key).is_some(), "missing {key}");
    }
    assert_eq!(sm["optimizer"], "mm");
    assert!(sm["nmi"].as_f64().unwrap() > 0.9);
}

#[test]
fn repeats_report_medians() {
    let dir = tempfile::tempdir().unwrap();
    let sum = dir.path().join("s.json");
    let out = run(&[
        "--synth",
        "k=3,d=2,n=300",
        "--iters",
        "10",
        "--seed",
        "4",
        "--repeats",
        "5",
        "--summary-out",
        s(&sum),
    ]);
    assert!(out.status.success());
    let sm = read_summary(&sum);
    let repeats = sm["repeats"].as_array().unwrap();
    assert_eq!(repeats.len(), 5);
    let seeds: Vec<u64> = repeats
        .iter()
        .map(|r| r["seed"].as_u64().unwrap())
        .collect();
    assert_eq!(seeds, [4, 5, 6, 7, 8]);
    let mut ks: Vec<u64> = repeats
        .iter()
        .map(|r| r["k_est"].as_u64().unwrap())
        .collect();
    ks.sort_unstable();
    assert_eq!(sm["k_est"].as_u64().unwrap(), ks[2]);
}

#[test]
fn csv_and_binary_inputs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let x = Array2::from_shape_fn((60, 2), |(i, j)| {
        ((i % 3) * 10) as f64 + 0.1 * ((i * 7 + j) % 5) as f64
    });
    let csv = dir.path().join("x.csv");
    let mut text = String::from("a,b\n");
    for row in x.rows() {
        text.push_str(&format!("{:?},{:?}\n", row[0], row[1]));
    }
    std::fs::write(&csv, text).unwrap();
    let bin = dir.path().join("x.dpmf");
    write_binary(&bin, &x).unwrap();
    let labels = dir.path().join("y.txt");
    let y: String = (0..60).map(|i| format!("{}\n", i % 3)).collect();
    std::fs::write(&labels, y).unwrap();

    let common = [
        "--optimizer",
        "mm",
        "--trunc-k",
        "8",
        "--iters",
        "10",
        "--no-timings",
    ];
    let from_csv = run(&[
        &common[..],
        &["--header", "--labels", s(&labels), "--features", s(&csv)],
    ]
    .concat());
    let from_bin = run(&[
        &common[..],
        &["--labels", s(&labels), "--features", s(&bin)],
    ]
    .concat());
    assert!(
        from_csv.status.success(),
        "{}",
        String::from_utf8_lossy(&from_csv.stderr)
    );
    assert!(
        from_bin.status.success(),
        "{}",
        String::from_utf8_lossy(&from_bin.stderr)
    );
    assert_eq!(from_csv.stdout, from_bin.stdout);
    let sm: Value = serde_json::from_slice(&from_csv.stdout).unwrap();
    assert_eq!(sm["acc"].as_f64().unwrap(), 1.0);
}

#[test]
fn unlabeled_features_give_null_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("x.csv");
    let text: String = (0..40)
        .map(|i| format!("{},{}\n", (i % 2) * 8, i % 3))
        .collect();
    std::fs::write(&csv, text).unwrap();
    let out = run(&[
        "--trunc-k",
        "5",
        "--minibatch",
        "20",
        "--iters",
        "5",
        "--features",
        s(&csv),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let sm: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(sm["nmi"].is_null());
    assert!(sm["acc"].is_null());
}

#[test]
fn failures_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!run(&[]).status.success());
    assert!(!run(&["--synth", "k=2", "--optimizer", "adam"])
        .status
        .success());

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1,2\n3,abc\n").unwrap();
    let out = run(&["--features", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains('2'), "{err}");

    let out = run(&["--synth", "k=2,n=50", "--minibatch", "51"]);
    assert_eq!(out.status.code(), Some(1));
}
