use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use qfim_core::output::{read_csv, read_json, BoundRow, CcdfRow, HistRow};
use qfim_core::tails::{SweepRow, TailFit};

fn qfim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qfim")).args(args).output().expect("binary runs")
}

fn qfim_in(out: &Path, args: &[&str]) -> Output {
    let mut all: Vec<&str> = args.to_vec();
    all.extend(["--out", out.to_str().unwrap()]);
    qfim(&all)
}

/// The JSON artifact with the `runtime` block removed.
fn without_runtime(path: &Path) -> Value {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("runtime");
    v
}

#[test]
fn estimate_is_reproducible_across_runs_and_workers() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["estimate", "-N", "32", "-m", "5", "-K", "20000", "--seed", "7"];
    assert!(qfim_in(a.path(), &args).status.success());
    let mut with_workers = args.to_vec();
    with_workers.extend(["--workers", "3"]);
    assert!(qfim_in(b.path(), &with_workers).status.success());
    let (ja, jb) = (a.path().join("estimate.json"), b.path().join("estimate.json"));
    assert_eq!(without_runtime(&ja), without_runtime(&jb));

    let env: qfim_core::output::Envelope<Value> = read_json(&ja).unwrap();
    assert_eq!(env.config["seed"], 7);
    assert_eq!(env.config["n"], 32);
    assert_eq!(env.result["k_samples"], 20000);
}

#[test]
fn validate_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = qfim_in(dir.path(), &["validate", "-N", "16", "-m", "4", "--seed", "1"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.lines().all(|l| l.starts_with("PASS")));
    let env: qfim_core::output::Envelope<Value> = read_json(&dir.path().join("validate.json")).unwrap();
    assert_eq!(env.result["all_passed"], true);
}

#[test]
fn sweep_writes_one_row_per_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let out = qfim_in(dir.path(), &["sweep", "-m", "10", "--Ns", "20,40,80,160", "--trials", "100", "--seed", "3"]);
    assert!(out.status.success());
    let (cfg, rows): (Value, Vec<SweepRow>) = read_csv(&dir.path().join("sweep.csv")).unwrap();
    assert_eq!(rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![20, 40, 80, 160]);
    assert!(rows.iter().all(|r| r.trials == 100 && r.seed == 3));
    assert_eq!(cfg["seed"], 3);
    assert_eq!(cfg["trials"], 100);
}

#[test]
fn replaying_an_artifact_reproduces_it() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(qfim_in(a.path(), &["hist", "--Ns", "12,24", "-m", "3", "-K", "500", "--bins", "8", "--seed", "4"]).status.success());
    let first = a.path().join("hist.csv");
    let replay = qfim(&["--config", first.to_str().unwrap(), "--out", b.path().to_str().unwrap()]);
    assert!(replay.status.success());
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(b.path().join("hist.csv")).unwrap());

    let (_, rows): (Value, Vec<HistRow>) = read_csv(&first).unwrap();
    assert_eq!(rows.len(), 16);
    assert_eq!(rows.iter().filter(|r| r.n == 12).map(|r| r.count).sum::<usize>(), 500);
}

#[test]
fn tail_artifacts_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let out = qfim_in(dir.path(), &["tail", "--Ns", "10,20", "-m", "3", "-K", "2000", "--seed", "9"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, ccdf): (Value, Vec<CcdfRow>) = read_csv(&dir.path().join("ccdf.csv")).unwrap();
    assert!(!ccdf.is_empty());
    for w in ccdf.windows(2).filter(|w| w[0].n == w[1].n) {
        assert!(w[0].t < w[1].t && w[0].ccdf >= w[1].ccdf);
    }
    let env: qfim_core::output::Envelope<Value> = read_json(&dir.path().join("tailfit.json")).unwrap();
    assert_eq!(env.result["seed"], 9);
    let fits: Vec<TailFit> = serde_json::from_value(env.result["fits"].clone()).unwrap();
    assert_eq!(fits.iter().map(|f| f.n).collect::<Vec<_>>(), vec![10, 20]);
    assert!(fits.iter().all(|f| f.c_adjusted > 0.0 && f.num_samples == 2000));
    assert!(env.runtime.wall_seconds >= 0.0);
}

#[test]
fn bounds_report_vacuous_regimes() {
    let dir = tempfile::tempdir().unwrap();
    let out = qfim_in(dir.path(), &["bounds", "-N", "20", "-m", "10", "-K", "300", "--eps", "0.3"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.contains("vacuous at this scale"));
    assert!(stdout.contains("precondition unmet"));
    let (_, grid): (Value, Vec<BoundRow>) = read_csv(&dir.path().join("bounds.csv")).unwrap();
    assert!(grid.iter().all(|r| r.frobenius_empirical == 0.0));
    let env: qfim_core::output::Envelope<Value> = read_json(&dir.path().join("bounds.json")).unwrap();
    assert_eq!(env.result["report"]["frobenius"]["vacuous"], true);
    assert_eq!(env.result["eigenvalue_bound"]["precondition_met"], false);
}

#[test]
fn json_format_switch() {
    let dir = tempfile::tempdir().unwrap();
    assert!(qfim_in(dir.path(), &["sweep", "--Ns", "6", "-m", "2", "--trials", "5", "--format", "json"]).status.success());
    let env: qfim_core::output::Envelope<Vec<SweepRow>> = read_json(&dir.path().join("sweep.json")).unwrap();
    assert_eq!(env.result.len(), 1);
    assert!(qfim_in(dir.path(), &["estimate", "-N", "6", "-m", "2", "-K", "50", "--format", "csv"]).status.success());
    assert!(dir.path().join("estimate.csv").exists());
    let (_, errs): (Value, Vec<std::collections::BTreeMap<String, f64>>) = read_csv(&dir.path().join("rel_frob.csv")).unwrap();
    assert_eq!(errs.len(), 50);
    assert!(errs.iter().all(|r| r["rel_frob"] >= 0.0));
}

#[test]
fn theta_file_is_used_and_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let theta = dir.path().join("theta.json");
    std::fs::write(&theta, "[0.25, -1.5]").unwrap();
    let args = ["estimate", "-N", "8", "-m", "2", "-K", "100", "--theta-file", theta.to_str().unwrap()];
    assert!(qfim_in(dir.path(), &args).status.success());
    let env: qfim_core::output::Envelope<Value> = read_json(&dir.path().join("estimate.json")).unwrap();
    assert_eq!(env.result["theta"], serde_json::json!([0.25, -1.5]));
    assert_eq!(env.config["theta_policy"]["explicit"], serde_json::json!([0.25, -1.5]));

    std::fs::write(&theta, "[0.25]").unwrap();
    assert_eq!(qfim_in(dir.path(), &args).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases: &[&[&str]] = &[
        &["sweep", "--Ns", "20", "--bogus"],
        &["estimate", "-N", "8", "-m", "2", "-K", "10", "--eps", "0.2"],
        &["bounds", "-N", "20", "--eps", "0.7"],
        &["estimate", "-N", "1", "-m", "2", "-K", "10"],
        &["estimate", "-N", "8", "-m", "0", "-K", "10"],
        &["tail", "--Ns", "20", "-K", "999"],
        &["sweep", "--Ns", "20", "--trials", "1"],
        &["hist", "--Ns", "20", "--bins", "0"],
        &["estimate", "-N", "8", "-m", "2", "-K", "10", "--prob-floor", "-1"],
        &["frobnicate"],
    ];
    for args in cases {
        assert_eq!(qfim_in(dir.path(), args).status.code(), Some(2), "{args:?}");
    }
    assert_eq!(qfim(&["--out", "x"]).status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_with_status_one() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    // The output directory cannot be created under a regular file.
    let out = qfim(&["estimate", "-N", "6", "-m", "2", "-K", "10", "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}
