//! End-to-end tests of the `pset` binary: exit codes, output shapes,
//! determinism, and the verification self-test.

use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

fn pset() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pset"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

#[test]
fn missing_config_exits_1_with_path_in_message() {
    let out = run(pset().args(["simulate", "--config", "/definitely/not/here.toml"]));
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("/definitely/not/here.toml"),
        "stderr: {stderr}"
    );
}

#[test]
fn malformed_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "trials = \"many\"").unwrap();
    let out = run(pset().args(["simulate", "--config", cfg.to_str().unwrap()]));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_values_exit_2() {
    let out = run(pset().args([
        "simulate",
        "--scenario",
        "target_tracking",
        "--trials",
        "0",
        "--horizon",
        "5",
    ]));
    assert_eq!(out.status.code(), Some(2));

    let out = run(pset().args(["simulate", "--scenario", "not_a_scenario"]));
    assert_eq!(out.status.code(), Some(2));

    let out = run(pset().args([
        "simulate",
        "--trials",
        "1",
        "--horizon",
        "2",
        "--estimators",
        "pset,unknown",
    ]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn smoke_run_has_the_contracted_shape_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("smoke.toml");
    std::fs::write(
        &cfg_path,
        r#"
scenario = "target_tracking"
seed = 99
trials = 2
horizon = 10
estimators = ["pset", "kf"]
c_grid = [12.0, 24.0]
dump_steps = true
"#,
    )
    .unwrap();

    let out_a = dir.path().join("run_a");
    let status = run(pset().args([
        "simulate",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
    ]));
    assert_eq!(status.status.code(), Some(0));

    let metrics = read(&out_a.join("metrics.csv"));
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines[0], "estimator,c,k,E_k,T_k,rate");
    // |c grid| * horizon rows per estimator.
    assert_eq!(lines.len() - 1, 2 * 2 * 10);
    assert!(metrics.ends_with('\n'));

    let steps = read(&out_a.join("steps.csv"));
    let step_lines: Vec<&str> = steps.lines().collect();
    assert_eq!(step_lines[0], "trial,k,varsigma,rho,no_send_prob,sq_err");
    // estimators * |c grid| * trials * horizon dump rows.
    assert_eq!(step_lines.len() - 1, 2 * 2 * 2 * 10);

    let manifest = read(&out_a.join("manifest.json"));
    assert!(manifest.contains("\"master_seed\": 99"));
    assert!(manifest.contains("metrics.csv"));

    // Identical config and seed: byte-identical metrics.
    let out_b = dir.path().join("run_b");
    let status = run(pset().args([
        "simulate",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
    ]));
    assert_eq!(status.status.code(), Some(0));
    assert_eq!(metrics, read(&out_b.join("metrics.csv")));
    assert_eq!(steps, read(&out_b.join("steps.csv")));
}

#[test]
fn thread_count_does_not_change_the_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &Path| {
        vec![
            "simulate".to_string(),
            "--trials".into(),
            "4".into(),
            "--horizon".into(),
            "12".into(),
            "--c-grid".into(),
            "12".into(),
            "--estimators".into(),
            "pset,random".into(),
            "--seed".into(),
            "3".into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ]
    };
    let out_one = dir.path().join("one");
    let status = run(pset().args(args(&out_one)).env("PSET_THREADS", "1"));
    assert_eq!(status.status.code(), Some(0));
    let out_four = dir.path().join("four");
    let status = run(pset().args(args(&out_four)).env("PSET_THREADS", "4"));
    assert_eq!(status.status.code(), Some(0));
    assert_eq!(
        read(&out_one.join("metrics.csv")),
        read(&out_four.join("metrics.csv"))
    );
}

#[test]
fn bounds_writes_monotone_columns_and_the_target_interval() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(pset().args([
        "bounds",
        "--scenario",
        "target_tracking",
        "--target-rate",
        "0.6",
        "--c-points",
        "20",
        "--out",
        dir.path().to_str().unwrap(),
    ]));
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("scale interval"), "stdout: {stdout}");
    // Endpoints of the rate-0.6 window, within 15% of [1.6, 76].
    let bracket = stdout
        .split('[')
        .nth(1)
        .and_then(|s| s.split(']').next())
        .expect("interval in stdout");
    let ends: Vec<f64> = bracket
        .split(',')
        .map(|v| v.trim().parse().unwrap())
        .collect();
    assert!((1.36..=1.84).contains(&ends[0]), "left endpoint {}", ends[0]);
    assert!((64.6..=87.4).contains(&ends[1]), "right endpoint {}", ends[1]);

    let csv = read(&dir.path().join("bounds.csv"));
    let mut lower_prev = f64::NEG_INFINITY;
    let mut upper_prev = f64::NEG_INFINITY;
    for line in csv.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 5);
        let lower: f64 = cells[1].parse().unwrap();
        let upper: f64 = cells[2].parse().unwrap();
        assert!(lower >= lower_prev - 1e-12, "rate_lower not nondecreasing");
        assert!(upper >= upper_prev - 1e-12, "rate_upper not nondecreasing");
        lower_prev = lower;
        upper_prev = upper;
    }

    let manifest = read(&dir.path().join("manifest.json"));
    assert!(manifest.contains("target_rate_interval"));
}

#[test]
fn bounds_with_zero_target_degenerates_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(pset().args([
        "bounds",
        "--scenario",
        "target_tracking",
        "--target-rate",
        "0",
        "--c-points",
        "12",
        "--out",
        dir.path().to_str().unwrap(),
    ]));
    assert_eq!(out.status.code(), Some(0));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("warning"), "stderr: {stderr}");
}

#[test]
fn verify_quick_mode_passes_under_ten_seconds() {
    let started = Instant::now();
    let out = run(pset().args(["verify", "--trials", "10"]));
    let elapsed = started.elapsed();
    assert_eq!(out.status.code(), Some(0));
    assert!(
        elapsed.as_secs_f64() < 10.0,
        "quick verify took {:.1}s",
        elapsed.as_secs_f64()
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("posterior oracle"));
}

#[test]
fn injected_fault_makes_verify_exit_5() {
    let out = run(pset().args(["verify", "--trials", "10", "--inject-fault"]));
    assert_eq!(out.status.code(), Some(5));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("posterior oracle"), "stderr: {stderr}");
}

#[test]
fn sweep_smoke_writes_rates_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(pset().args([
        "sweep",
        "--scenario",
        "target_tracking",
        "--trials",
        "2",
        "--horizon",
        "10",
        "--estimators",
        "kf",
        "--out",
        dir.path().to_str().unwrap(),
    ]));
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rates = read(&dir.path().join("rates.csv"));
    let lines: Vec<&str> = rates.lines().collect();
    assert_eq!(lines[0], "c,rate_lower,rate_upper,empirical_rate");
    // The built-in target-tracking grid has nine scales.
    assert_eq!(lines.len() - 1, 9);
    // Sweep forces the triggered filter into the set.
    let metrics = read(&dir.path().join("metrics.csv"));
    assert!(metrics.lines().skip(1).any(|l| l.starts_with("pset,")));
}
