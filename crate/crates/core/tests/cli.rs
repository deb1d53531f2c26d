use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fbm_mde::estimator::EstimateResult;
use fbm_mde::experiment::RunManifest;
use serde_json::Value;

const QUICK: [&str; 6] = ["--set", "n_obs=2000", "--set", "n_scheme=2000", "--set", "distance=w2"];

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbm-mde"))
        .args(args)
        .arg("--out")
        .arg(out)
        .arg("--jobs")
        .arg("1")
        .output()
        .expect("binary runs")
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn fbm_test_writes_table_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["fbm-test", "--set", "fbm_test.n=4096", "--seed", "5"], dir.path());
    ok(&o);
    let csv = fs::read_to_string(dir.path().join("fbm_test.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("lag,empirical,theoretical,ratio,stderr"));
    let lag0: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(lag0[0], "0");
    assert!((lag0[3].parse::<f64>().unwrap() - 1.0).abs() < 0.1);
    let m = manifest(dir.path());
    assert_eq!(m.status, "ok");
    assert_eq!(m.config.seed, 5);
    assert_eq!(m.outputs, vec!["fbm_test.csv".to_string()]);
    assert!(m.wall_clock_secs.is_some());
}

#[test]
fn bad_configuration_exits_with_2_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    for (set, key) in [
        ("hurst=1.5", "hurst"),
        ("grid.spacing=-1", "grid"),
        ("nonsense=1", "nonsense"),
    ] {
        let o = run(&["estimate", "--set", set], dir.path());
        assert_eq!(o.status.code(), Some(2), "{set}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(key), "{set}: {err}");
    }
}

#[test]
fn one_point_grid_contrast_curve() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "contrast-curve",
        "--set",
        r#"grid={"kind":"explicit","points":[[2.0]]}"#,
    ];
    args.extend(QUICK);
    ok(&run(&args, dir.path()));
    let csv = fs::read_to_string(dir.path().join("contrast.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "theta_1,contrast");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("2"));
}

#[test]
fn estimate_json_round_trips_and_manifest_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["estimate", "--set", "grid.spacing=0.25"];
    args.extend(QUICK);
    ok(&run(&args, dir.path()));
    let text = fs::read_to_string(dir.path().join("estimate.json")).unwrap();
    let parsed: EstimateResult = serde_json::from_str(&text).unwrap();
    let again: EstimateResult = serde_json::from_str(&serde_json::to_string(&parsed).unwrap()).unwrap();
    assert_eq!(parsed, again);
    assert_eq!(parsed.contrast_values[parsed.argmin_index], parsed.min_contrast());

    // a manifest doubles as a configuration file
    let rerun = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("manifest.json");
    ok(&run(&["estimate", "--config", cfg.to_str().unwrap()], rerun.path()));
    let second: EstimateResult =
        serde_json::from_str(&fs::read_to_string(rerun.path().join("estimate.json")).unwrap()).unwrap();
    assert_eq!(second.theta_hat, parsed.theta_hat);
    assert_eq!(second.contrast_values, parsed.contrast_values);
    assert_eq!(manifest(rerun.path()).config, manifest(dir.path()).config);
}

#[test]
fn decreasing_flag_routes_to_weighted_estimator() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "estimate",
        "--set",
        "decreasing=true",
        "--set",
        "gamma=0.1",
        "--set",
        "grid.spacing=0.5",
    ];
    args.extend(QUICK);
    ok(&run(&args, dir.path()));
    let r: EstimateResult =
        serde_json::from_str(&fs::read_to_string(dir.path().join("estimate.json")).unwrap()).unwrap();
    assert!(r.theta_hat[0] >= 0.5 && r.theta_hat[0] <= 4.0);
}

#[test]
fn sgd_writes_four_deterministic_traces() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "sgd",
        "--set",
        "model=sigmoid2d",
        "--set",
        "theta0=[1.0]",
        "--set",
        "n_obs=2000",
        "--set",
        "n_scheme=2000",
        "--set",
        "sgd.n_iter=5",
        "--seed",
        "3",
    ];
    ok(&run(&args, a.path()));
    ok(&run(&args, b.path()));
    let mut names: Vec<String> = manifest(a.path()).outputs;
    names.sort();
    assert_eq!(
        names,
        ["sgd_g0_z0.csv", "sgd_g0_z1.csv", "sgd_g1_z0.csv", "sgd_g1_z1.csv"]
    );
    for name in &names {
        let ta = fs::read_to_string(a.path().join(name)).unwrap();
        assert_eq!(ta, fs::read_to_string(b.path().join(name)).unwrap());
        let lines: Vec<&str> = ta.lines().collect();
        assert_eq!(lines[0], "iter,theta_1,step_size,grad_norm");
        assert_eq!(lines.len(), 1 + 6);
    }
    let summary = &manifest(a.path()).summary;
    assert!(summary["runs"]
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r["in_box"] == Value::Bool(true)));
}

#[test]
fn rate_study_resumes_finished_replications() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "rate-study",
        "--set",
        "distance=w2",
        "--set",
        "grid.spacing=0.25",
        "--set",
        "rate.n_values=[200,400]",
        "--set",
        "rate.replications=2",
        "--set",
        "rate.n_scheme_anchor=400",
    ];
    ok(&run(&args, dir.path()));
    let first = fs::read_to_string(dir.path().join("rate.csv")).unwrap();
    assert_eq!(first.lines().count(), 3);
    assert_eq!(manifest(dir.path()).summary["resumed"], 0);

    ok(&run(&args, dir.path()));
    assert_eq!(manifest(dir.path()).summary["resumed"], 4);
    assert_eq!(fs::read_to_string(dir.path().join("rate.csv")).unwrap(), first);

    // a different configuration starts over
    let mut changed = args.to_vec();
    changed.extend(["--seed", "9"]);
    ok(&run(&changed, dir.path()));
    assert_eq!(manifest(dir.path()).summary["resumed"], 0);
}

#[test]
fn single_replication_reports_missing_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "rate-study",
        "--set",
        "distance=w1",
        "--set",
        "grid.spacing=0.5",
        "--set",
        "rate.n_values=[200,400]",
        "--set",
        "rate.replications=1",
        "--set",
        "rate.n_scheme_anchor=200",
    ];
    ok(&run(&args, dir.path()));
    let csv = fs::read_to_string(dir.path().join("rate.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",NA")), "{csv}");
}
