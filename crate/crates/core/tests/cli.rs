use std::fs;
use std::process::{Command, Output};

fn juntawalk(args: &[&str], dir: &std::path::Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_juntawalk"))
        .args(args)
        .current_dir(dir)
        .env("JUNTAWALK_WORKERS", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn presets_list_and_write() {
    let dir = tempfile::tempdir().unwrap();
    let o = juntawalk(&["presets"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("fig1-desk"));

    let o = juntawalk(&["presets", "fig1-desk", "--write", "specs"], dir.path());
    assert!(o.status.success());
    assert_eq!(fs::read_dir(dir.path().join("specs")).unwrap().count(), 3);

    let o = juntawalk(&["presets", "no-such-preset"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(juntawalk(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(juntawalk(&["run"], dir.path()).status.code(), Some(2));
    fs::write(dir.path().join("bad.json"), r#"{"version": 1, "name": "x"}"#).unwrap();
    let o = juntawalk(&["run", "bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn run_writes_seed_and_aggregate_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"{
  "version": 1,
  "name": "tiny",
  "target": {"dim": 6, "parity_support": [1, 2]},
  "learner": {"kind": "mlp", "hidden": [8], "loss": {"kind": "td", "alpha": 0.9}, "data": {"kind": "walk", "flip_prob": 0.9},
              "lr": 0.01, "max_iters": 500, "stop_loss": null, "eval_every": 100, "test_size": 64},
  "seeds": [0, 1],
  "output": "out"
}"#;
    fs::write(dir.path().join("tiny.json"), spec).unwrap();
    let o = juntawalk(&["run", "tiny.json", "--gnuplot-script"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run = dir.path().join("out/tiny");
    for f in ["seed_0.csv", "seed_1.csv", "aggregate.csv", "spec.json", "plot.gp"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
}

#[test]
fn analyze_bound_and_cp() {
    let dir = tempfile::tempdir().unwrap();
    let o = juntawalk(&["analyze", "bound", "--T", "0", "--out", "a"], dir.path());
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "0.5");
    assert!(dir.path().join("a/bound.json").exists());

    let o = juntawalk(
        &["analyze", "cp", "--d", "8", "--k", "2", "--p", "0.5", "--B", "4,16,64,256", "--outer", "200", "--out", "a"],
        dir.path(),
    );
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 5);
    assert!(dir.path().join("a/cp.csv").exists());
}

#[test]
fn analyze_baseline_recovers_the_support() {
    let dir = tempfile::tempdir().unwrap();
    let target = r#"{"dim": 50, "parity_support": [1, 2, 3, 4, 5]}"#;
    fs::write(dir.path().join("parity5.json"), target).unwrap();
    let o = juntawalk(&["analyze", "baseline", "--target", "parity5.json", "--seeds", "3", "--out", "a"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.contains(",1 2 3 4 5,")).count(), 3, "{out}");
}

#[test]
fn verify_subset_prints_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = juntawalk(&["verify", "--only", "1,11"], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.contains("[PASS] C01"));
    assert!(out.contains("[PASS] C11"));
    assert!(out.contains("[PASS] C12"));
}
