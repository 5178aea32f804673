use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ital(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ital"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("ital binary runs")
}

fn run_small(out: &Path) -> Output {
    ital(&[
        "run",
        "--task",
        "classification",
        "--learner",
        "imt,ital-1",
        "--iters",
        "20",
        "--seeds",
        "2",
        "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn run_writes_csvs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_small(dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["imt.csv", "ital-1.csv", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let head = fs::read_to_string(dir.path().join("imt.csv")).unwrap();
    assert!(head.starts_with("seed,iteration,metric,value\n"));

    let s = ital(&[
        "summarize",
        dir.path().join("imt.csv").to_str().unwrap(),
        dir.path().join("ital-1.csv").to_str().unwrap(),
        "--json",
    ]);
    assert!(s.status.success());
    let v: serde_json::Value = serde_json::from_slice(&s.stdout).unwrap();
    assert_eq!(v["learners"].as_array().unwrap().len(), 2);
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"task": {"kind": "regression", "dim": 5, "samples": 50},
            "teacher": "feedback_cooperative", "learners": ["sgd", "ital-3"],
            "iterations": 10, "seeds": 1, "beta": null, "output": null}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = ital(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--iters",
        "7",
        "--out",
        out.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let traces: serde_json::Value = serde_json::from_slice(&fs::read(out.join("ital-3.json")).unwrap()).unwrap();
    assert_eq!(traces[0]["series"]["distance"].as_array().unwrap().len(), 8);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(
        &cfg,
        r#"{"task": {"kind": "regression", "dim": 5, "samples": 50}, "bogus": 1}"#,
    )
    .unwrap();
    assert_eq!(ital(&["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(
        ital(&["run", "--task", "regression", "--eta", "-1"]).status.code(),
        Some(2)
    );
    assert_eq!(ital(&["run", "--task", "nonsense"]).status.code(), Some(2));
    assert_eq!(
        ital(&["run", "--learner", "ital-40", "--iters", "1"]).status.code(),
        Some(2)
    );
    assert_eq!(ital(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn numeric_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    // a huge step on the squared loss overflows within a few iterations
    let o = ital(&[
        "run",
        "--task",
        "regression",
        "--learner",
        "sgd",
        "--eta",
        "1e6",
        "--iters",
        "400",
        "--seeds",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn maps_generate_writes_sparse_and_human_maps() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(
        ital(&["maps", "generate", "--kind", "sparse", "--count", "3", "--seed", "4", "--out", out])
            .status
            .success()
    );
    for i in 0..3 {
        let text = fs::read_to_string(dir.path().join(format!("map-{i:03}.txt"))).unwrap();
        let values: Vec<f64> = text.split_whitespace().map(|v| v.parse().unwrap()).collect();
        assert_eq!(values.len(), 64);
        assert_eq!(values.iter().filter(|&&v| v == 1.0).count(), 3);
        assert_eq!(values.iter().filter(|&&v| v != 0.0).count(), 3);
    }
    assert!(ital(&["maps", "generate", "--kind", "human", "--out", out])
        .status
        .success());
    let a = fs::read_to_string(dir.path().join("human-A.txt")).unwrap();
    assert_eq!(a.lines().count(), 5);
    assert!(a.chars().all(|c| "WBR\n".contains(c)));
}

#[test]
fn tune_beta_reports_a_choice() {
    let o = ital(&[
        "tune-beta",
        "--task",
        "regression",
        "--rounds",
        "3",
        "--seeds",
        "1",
        "--grid",
        "1,10,1e9",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("chosen beta"), "{text}");
}

#[test]
fn replay_reports_corrupt_lines() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("s.jsonl");
    fs::write(&log, "{not json\n").unwrap();
    let o = ital(&["replay", log.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
}
