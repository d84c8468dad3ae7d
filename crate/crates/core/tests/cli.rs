//! End-to-end checks of the `autothink` binary.

use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[run]
seed = 3
stages = ["gen-tasks", "calibrate", "sft", "filter", "train-agrpo", "eval", "compare-modes", "report"]

[world]
n_coarse = 4
n_tasks = 60

[train]
iters = 5
"#;

fn autothink(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_autothink"))
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn run_dir(out: &Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap().trim().to_owned()
}

#[test]
fn pipeline_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let da = run_dir(&autothink(&[
        "pipeline",
        "--config",
        &cfg,
        "--out",
        a.to_str().unwrap(),
    ]));
    let db = run_dir(&autothink(&[
        "pipeline",
        "--config",
        &cfg,
        "--out",
        b.to_str().unwrap(),
    ]));
    let name = Path::new(&da).file_name().unwrap();
    assert_eq!(Some(name), Path::new(&db).file_name());
    assert!(name.to_str().unwrap().ends_with("-s3"));
    for f in ["eval.csv", "agrpo_log.jsonl", "report.json", "compare_adaptive.csv"] {
        let x = std::fs::read(Path::new(&da).join(f)).unwrap();
        let y = std::fs::read(Path::new(&db).join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
    let csv = std::fs::read_to_string(Path::new(&da).join("eval.csv")).unwrap();
    assert!(csv.starts_with("level,acc,think_rate,n,mean_trace_len\n"));
    assert!(csv.lines().last().unwrap().starts_with("ALL,"));
}

#[test]
fn seed_flag_changes_run_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("o");
    let d = run_dir(&autothink(&[
        "pipeline",
        "--config",
        &cfg,
        "--seed",
        "9",
        "--out",
        out.to_str().unwrap(),
    ]));
    assert!(d.ends_with("-s9"));
}

#[test]
fn unknown_key_is_refused_before_any_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{SMALL}\n[eval]\nsamples = 2\n"));
    let out = tmp.path().join("o");
    let r = autothink(&["pipeline", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("samples"));
    assert!(!out.exists());
}

#[test]
fn failing_stage_leaves_marker_and_names_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let r = autothink(&["filter", "--out", out.to_str().unwrap()]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("`filter`"));
    let marker = std::fs::read_to_string(out.join("FAILED")).unwrap();
    assert!(marker.starts_with("stage: filter"));
}

#[test]
fn single_stages_chain_through_out_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("o");
    let o = out.to_str().unwrap();
    for stage in ["gen-tasks", "calibrate", "sft", "filter", "train-grpo", "report"] {
        let r = autothink(&[stage, "--config", &cfg, "--out", o]);
        assert!(r.status.success(), "{stage}: {}", String::from_utf8_lossy(&r.stderr));
    }
    let report = std::fs::read_to_string(out.join("report.json")).unwrap();
    assert!(report.contains("\"grpo_final\": {"));
    assert!(report.contains("\"eval\": null"));
    assert!(!out.join("FAILED").exists());
}
