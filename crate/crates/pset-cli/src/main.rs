//! `pset`: event-triggered remote state estimation simulator.
//!
//! Subcommands: `simulate` (Monte Carlo metrics), `sweep` (the built-in
//! scale grid with rate-targeting output), `bounds` (communication-rate
//! curves and scale selection), `verify` (posterior oracle and identity
//! batteries).

mod config;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use chrono::Utc;
use clap::{Args, Parser, Subcommand};

use pset_core::analysis::{fixed_points, rate_interval, rate_window, FIXED_POINT_MAX_ITER};
use pset_core::harness::{
    run_experiment, run_verification, sweep_rate_bounds, ExperimentConfig, GridSpec, HarnessError,
};

use config::{resolve_bounds, resolve_run, FileConfig, ResolvedBounds, ResolvedRun, DEFAULT_SEED};
use output::{bounds_csv, metrics_csv, rates_csv, steps_csv, write_atomic, BoundsRow, RunManifest};

#[derive(Parser)]
#[command(
    name = "pset",
    version,
    about = "Event-triggered remote state estimation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run Monte Carlo estimation experiments; writes metrics.csv (+ steps.csv).
    Simulate(RunArgs),
    /// Simulate over the scenario's built-in scale grid with rate-targeting output.
    Sweep(RunArgs),
    /// Rate curves over a log-spaced scale grid; writes bounds.csv.
    Bounds(BoundsArgs),
    /// Posterior oracle plus algebraic identity batteries.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// TOML config file; flags override file keys.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo trials per (estimator, scale) cell.
    #[arg(long)]
    trials: Option<usize>,
    /// Steps per trial.
    #[arg(long)]
    horizon: Option<usize>,
    /// Scenario: target_tracking | spring_mass.
    #[arg(long)]
    scenario: Option<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Comma-separated estimator names (pset, kf, random).
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<String>>,
    /// Comma-separated trigger-weight scales.
    #[arg(long = "c-grid", value_delimiter = ',')]
    c_grid: Option<Vec<f64>>,
    /// Also write the per-step dump (steps.csv).
    #[arg(long)]
    dump_steps: bool,
    /// Pin the random baseline's send probability instead of rate-matching.
    #[arg(long)]
    random_send_prob: Option<f64>,
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Emit the scale interval bracketing this target communication rate.
    #[arg(long)]
    target_rate: Option<f64>,
    #[arg(long = "c-min")]
    c_min: Option<f64>,
    #[arg(long = "c-max")]
    c_max: Option<f64>,
    #[arg(long = "c-points")]
    c_points: Option<usize>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Randomized instances per identity battery.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Self-test: inject a sign-flip fault into the no-send covariance
    /// correction; the oracle must fail and the command must exit 5.
    #[arg(long, hide = true)]
    inject_fault: bool,
}

/// Errors mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Exit 1: config file missing or unparseable.
    ConfigParse(String),
    /// Exit 2: config parsed but invalid.
    ConfigValidate(String),
    /// Exit 3: runtime failure.
    Runtime(String),
    /// Exit 4: a command precondition on the system structure failed.
    RankPrecondition(String),
    /// Exit 5: a verification tolerance was breached.
    VerifyFailed(String),
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::ConfigParse(_) => ExitCode::from(1),
            CliError::ConfigValidate(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(3),
            CliError::RankPrecondition(_) => ExitCode::from(4),
            CliError::VerifyFailed(_) => ExitCode::from(5),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::ConfigParse(msg)
            | CliError::ConfigValidate(msg)
            | CliError::Runtime(msg)
            | CliError::RankPrecondition(msg)
            | CliError::VerifyFailed(msg) => f.write_str(msg),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::InvalidConfig(msg) => CliError::ConfigValidate(msg),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(&args, false),
        Command::Sweep(args) => cmd_simulate(&args, true),
        Command::Bounds(args) => cmd_bounds(&args),
        Command::Verify(args) => cmd_verify(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn timestamp() -> String {
    Utc::now().to_rfc3339()
}

fn cmd_simulate(args: &RunArgs, sweep: bool) -> Result<(), CliError> {
    let started_at = timestamp();
    let file = FileConfig::load(args.config.as_deref())?;
    let mut resolved: ResolvedRun = resolve_run(args, &file)?;
    let scenario = resolved.scenario()?;
    if sweep {
        resolved.c_grid = scenario.table_scales().to_vec();
        if !resolved.estimators.iter().any(|n| n == "pset") {
            eprintln!("sweep: adding the 'pset' estimator (required for rate targeting)");
            resolved.estimators.insert(0, "pset".into());
        }
    }

    let experiment = ExperimentConfig {
        scenario,
        c_grid: resolved.c_grid.clone(),
        trials: resolved.trials,
        horizon: resolved.horizon,
        master_seed: resolved.seed,
        estimators: resolved.estimators.clone(),
        random_send_prob: resolved.random_send_prob,
        collect_steps: resolved.dump_steps,
    };
    experiment
        .validate()
        .map_err(|e| CliError::ConfigValidate(e.to_string()))?;

    std::fs::create_dir_all(&resolved.out_dir)
        .map_err(|e| CliError::Runtime(format!("creating output dir: {e}")))?;
    let outputs = run_experiment(&experiment).map_err(CliError::from)?;

    let mut written = Vec::new();
    let metrics_path = resolved.out_dir.join("metrics.csv");
    write_atomic(&metrics_path, metrics_csv(&outputs).as_bytes())?;
    written.push(metrics_path.display().to_string());

    if resolved.dump_steps {
        let steps_path = resolved.out_dir.join("steps.csv");
        write_atomic(&steps_path, steps_csv(&outputs).as_bytes())?;
        written.push(steps_path.display().to_string());
    }

    if sweep {
        let rows = sweep_rate_bounds(
            scenario,
            &resolved.c_grid,
            resolved.trials,
            resolved.horizon,
            resolved.seed,
            1e-10,
        )
        .map_err(CliError::from)?;
        let rates_path = resolved.out_dir.join("rates.csv");
        write_atomic(&rates_path, rates_csv(&rows).as_bytes())?;
        written.push(rates_path.display().to_string());
        for row in &rows {
            println!(
                "c = {:>12.5}: certified rate in [{:.4}, {:.4}], empirical {:.4}",
                row.c, row.rate_lower, row.rate_upper, row.empirical_rate
            );
        }
    }

    let manifest = RunManifest {
        command: if sweep { "sweep" } else { "simulate" }.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: resolved.seed,
        config: &resolved,
        started_at,
        finished_at: timestamp(),
        outputs: written,
        target_rate_interval: None,
    };
    manifest.write(&resolved.out_dir)?;
    Ok(())
}

fn cmd_bounds(args: &BoundsArgs) -> Result<(), CliError> {
    let started_at = timestamp();
    let file = FileConfig::load(args.config.as_deref())?;
    let resolved: ResolvedBounds = resolve_bounds(args, &file)?;
    let scenario = resolved.scenario()?;

    let (probe, _) = scenario
        .build(1.0)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    if !probe.c_full_row_rank() {
        return Err(CliError::RankPrecondition(
            "the measurement matrix must have full row rank for rate bounds".into(),
        ));
    }

    std::fs::create_dir_all(&resolved.out_dir)
        .map_err(|e| CliError::Runtime(format!("creating output dir: {e}")))?;

    let log_min = resolved.c_min.ln();
    let log_max = resolved.c_max.ln();
    let mut rows = Vec::with_capacity(resolved.points);
    for i in 0..resolved.points {
        let c = (log_min + (log_max - log_min) * i as f64 / (resolved.points - 1) as f64).exp();
        let (sys, cfg) = scenario
            .build(c)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let (rate_lower, rate_upper) =
            rate_window(&sys, &cfg, 1e-10).map_err(|e| CliError::Runtime(e.to_string()))?;
        let fp = fixed_points(&sys, &cfg, 1e-10, FIXED_POINT_MAX_ITER)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        rows.push(BoundsRow {
            c,
            rate_lower,
            rate_upper,
            p_l_trace: fp.p_lower.trace(),
            p_u_trace: fp.p_upper.trace(),
        });
    }

    let mut interval_field = None;
    if let Some(target) = args.target_rate.or(resolved.target_rate) {
        if !(0.0..1.0).contains(&target) {
            return Err(CliError::ConfigValidate(format!(
                "target rate must lie in [0, 1), got {target}"
            )));
        }
        let interval = rate_interval(scenario, target, resolved.c_min, resolved.c_max, 1e-10)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        if interval.degenerate {
            eprintln!(
                "warning: target rate {target} is outside the scanned window; \
                 interval degenerates to the grid edge"
            );
        }
        println!(
            "target rate {target}: scale interval [{:.6}, {:.6}]",
            interval.c_at_upper, interval.c_at_lower
        );
        interval_field = Some([interval.c_at_upper, interval.c_at_lower]);
    }

    let mut written = Vec::new();
    let bounds_path = resolved.out_dir.join("bounds.csv");
    write_atomic(&bounds_path, bounds_csv(&rows).as_bytes())?;
    written.push(bounds_path.display().to_string());

    let manifest = RunManifest {
        command: "bounds".to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: resolved.seed,
        config: &resolved,
        started_at,
        finished_at: timestamp(),
        outputs: written,
        target_rate_interval: interval_field,
    };
    manifest.write(&resolved.out_dir)?;
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let instances = args.trials.unwrap_or(1000);
    let seed = args.seed.unwrap_or(DEFAULT_SEED);
    let outcome = run_verification(instances, &GridSpec::default(), seed, args.inject_fault)
        .map_err(CliError::from)?;

    println!(
        "posterior oracle (50 steps): |Δmean| {:.3e} (tol {:.0e}), rel var {:.3e} (tol {:.0e}), mass dev {:.3e} (tol {:.0e})",
        outcome.posterior.max_mean_abs_dev,
        pset_core::harness::POSTERIOR_MEAN_TOL,
        outcome.posterior.max_var_rel_dev,
        pset_core::harness::POSTERIOR_VAR_RTOL,
        outcome.posterior.max_mass_abs_dev,
        pset_core::harness::POSTERIOR_MASS_TOL,
    );
    for report in &outcome.batteries {
        println!(
            "{}: {} instances, worst {:.3e} (tol {:.0e}): {}",
            report.name,
            report.instances,
            report.worst,
            report.tolerance,
            if report.pass() { "ok" } else { "FAIL" }
        );
    }
    println!(
        "verification finished in {:.2}s",
        started.elapsed().as_secs_f64()
    );

    if !outcome.pass() {
        let mut failing = Vec::new();
        if !outcome.posterior.within_tolerances() {
            failing.push("posterior oracle".to_string());
        }
        for report in &outcome.batteries {
            if !report.pass() {
                failing.push(report.name.to_string());
            }
        }
        return Err(CliError::VerifyFailed(format!(
            "verification failed: {}",
            failing.join(", ")
        )));
    }
    Ok(())
}
