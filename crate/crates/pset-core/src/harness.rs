//! Reproducible Monte Carlo experiments, accuracy/rate metrics, the
//! grid-quadrature posterior oracle, and randomized identity batteries.
//!
//! Determinism contract: a given `ExperimentConfig` (including the master
//! seed) produces bit-identical outputs regardless of the worker pool size.
//! Trials draw from counter-indexed substreams (see [`crate::stream`]) and
//! per-trial partials are merged in trial order with compensated summation.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::distr::{Distribution, StandardUniform};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{self, AnalysisError};
use crate::estimator::{Estimator, EstimatorContext, EstimatorRegistry, PsetKf, StepRecord};
use crate::matgauss::{random_psd, random_spd, symmetrize, GaussianBelief, MatrixError, SpdMatrix};
use crate::model::{simulate, LtiSystem, ModelError, Scenario};
use crate::pset::{
    evaluate_trigger, predict, trigger_moments, update, FilterError, FilterState, TriggerConfig,
};
use crate::stream;

/// Tolerance on the oracle-vs-closed-form posterior mean deviation.
pub const POSTERIOR_MEAN_TOL: f64 = 1e-6;
/// Relative tolerance on the oracle-vs-closed-form posterior variance.
pub const POSTERIOR_VAR_RTOL: f64 = 1e-4;
/// Tolerance on the no-send mass vs. the transmission-probability complement.
pub const POSTERIOR_MASS_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("grid too coarse: prior mass deviates from 1 by {mass_deviation:.3e}")]
    GridTooCoarse { mass_deviation: f64 },
    #[error("grid spec invalid: {0}")]
    InvalidGrid(String),
    #[error("the posterior oracle requires a scalar system, got n={n}, m={m}")]
    ScalarSystemRequired { n: usize, m: usize },
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    compensation: f64,
}

impl Compensated {
    fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

fn worker_pool() -> Result<rayon::ThreadPool, HarnessError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var("PSET_THREADS") {
        match raw.parse::<usize>() {
            Ok(n) if n > 0 => builder = builder.num_threads(n),
            _ => {
                return Err(HarnessError::InvalidConfig(format!(
                    "PSET_THREADS must be a positive integer, got '{raw}'"
                )))
            }
        }
    }
    builder
        .build()
        .map_err(|e| HarnessError::InvalidConfig(format!("worker pool: {e}")))
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

/// One experiment: a scenario swept over trigger scales, repeated over
/// independent trials, for a set of estimator strategies.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub c_grid: Vec<f64>,
    pub trials: usize,
    pub horizon: usize,
    pub master_seed: u64,
    /// Estimator names resolved through [`EstimatorRegistry::builtin`].
    pub estimators: Vec<String>,
    /// Transmission probability for the random baseline. When absent the
    /// baseline is rate-matched to the triggered filter's empirical rate at
    /// the same scale (0.5 if the triggered filter is not in the set).
    pub random_send_prob: Option<f64>,
    /// Collect per-step dumps alongside the aggregate metrics.
    pub collect_steps: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials == 0 {
            return Err(HarnessError::InvalidConfig("trials must be >= 1".into()));
        }
        if self.horizon == 0 {
            return Err(HarnessError::InvalidConfig("horizon must be >= 1".into()));
        }
        if self.c_grid.is_empty() {
            return Err(HarnessError::InvalidConfig(
                "c grid must be nonempty".into(),
            ));
        }
        if self.c_grid.iter().any(|&c| c <= 0.0 || !c.is_finite()) {
            return Err(HarnessError::InvalidConfig(
                "c grid entries must be finite and positive".into(),
            ));
        }
        if self.estimators.is_empty() {
            return Err(HarnessError::InvalidConfig(
                "estimator set must be nonempty".into(),
            ));
        }
        let registry = EstimatorRegistry::builtin();
        for name in &self.estimators {
            if !registry.contains(name) {
                return Err(HarnessError::InvalidConfig(format!(
                    "unknown estimator '{name}' (available: {:?})",
                    registry.names()
                )));
            }
        }
        let mut unique = self.estimators.clone();
        unique.sort();
        unique.dedup();
        if unique.len() != self.estimators.len() {
            return Err(HarnessError::InvalidConfig(
                "estimator names must be unique".into(),
            ));
        }
        if let Some(p) = self.random_send_prob {
            if !(0.0..=1.0).contains(&p) {
                return Err(HarnessError::InvalidConfig(format!(
                    "random_send_prob must lie in [0, 1], got {p}"
                )));
            }
        }
        if self.estimators.len() as u64 > stream::SLOTS_PER_TRIAL - stream::FIRST_DECISION_SLOT {
            return Err(HarnessError::InvalidConfig(
                "too many estimators for the per-trial stream slots".into(),
            ));
        }
        Ok(())
    }
}

/// Accuracy and rate metrics over an experiment:
///
/// - `e_k[j-1] = (1/j) Σ_{i<=j} sqrt(Σ_trials ‖x_i - x̂_i‖² / M)`
/// - `t_k[j-1] = (1/j) Σ_{i<=j} Σ_trials Tr(P_{i|i}) / M`
/// - `rate`: mean transmission decision over trials × steps.
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    pub e_k: Vec<f64>,
    pub t_k: Vec<f64>,
    pub rate: f64,
}

/// Per-trial series kept for metric assembly and step dumps.
#[derive(Debug, Clone)]
pub struct TrialSeries {
    pub squared_error: Vec<f64>,
    pub trace_p: Vec<f64>,
    pub sent: Vec<bool>,
    pub rho: Vec<f64>,
    pub no_send_probability: Vec<f64>,
}

impl TrialSeries {
    fn from_records(records: &[StepRecord]) -> Self {
        Self {
            squared_error: records.iter().map(|r| r.squared_error).collect(),
            trace_p: records.iter().map(|r| r.posterior.cov().trace()).collect(),
            sent: records.iter().map(|r| r.sent).collect(),
            rho: records.iter().map(|r| r.rho).collect(),
            no_send_probability: records.iter().map(|r| r.no_send_probability).collect(),
        }
    }
}

/// All trials of one `(estimator, scale)` cell.
#[derive(Debug, Clone)]
pub struct TrialMatrix {
    pub series: Vec<TrialSeries>,
    pub horizon: usize,
}

impl TrialMatrix {
    pub fn trials(&self) -> usize {
        self.series.len()
    }

    pub fn empirical_rate(&self) -> f64 {
        let mut sends = 0usize;
        let mut total = 0usize;
        for s in &self.series {
            sends += s.sent.iter().filter(|&&b| b).count();
            total += s.sent.len();
        }
        sends as f64 / total as f64
    }

    /// Assembles the metrics, merging per-trial partials in trial order with
    /// compensated summation.
    pub fn metrics(&self) -> MetricsAccumulator {
        let k_max = self.horizon;
        let m = self.trials() as f64;
        let mut sq = vec![Compensated::default(); k_max];
        let mut tr = vec![Compensated::default(); k_max];
        let mut sends = Compensated::default();
        for s in &self.series {
            for j in 0..k_max {
                sq[j].add(s.squared_error[j]);
                tr[j].add(s.trace_p[j]);
                if s.sent[j] {
                    sends.add(1.0);
                }
            }
        }
        let mut e_k = Vec::with_capacity(k_max);
        let mut t_k = Vec::with_capacity(k_max);
        let mut e_run = Compensated::default();
        let mut t_run = Compensated::default();
        for j in 0..k_max {
            e_run.add((sq[j].value() / m).sqrt());
            t_run.add(tr[j].value() / m);
            let denom = (j + 1) as f64;
            e_k.push(e_run.value() / denom);
            t_k.push(t_run.value() / denom);
        }
        MetricsAccumulator {
            e_k,
            t_k,
            rate: sends.value() / (m * k_max as f64),
        }
    }
}

/// Runs `trials` independent trials of one estimator. Trial `i` simulates its
/// trajectory from slot 0 of substream `i` and feeds the estimator's decision
/// draws from `decision_slot`, so estimators sharing a trajectory never share
/// a stream.
pub fn run_trials(
    estimator: &dyn Estimator,
    sys: &LtiSystem,
    trials: usize,
    horizon: usize,
    master_seed: u64,
    decision_slot: u64,
) -> Result<TrialMatrix, HarnessError> {
    let pool = worker_pool()?;
    let series: Result<Vec<TrialSeries>, HarnessError> = pool.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|trial| {
                let mut traj_rng =
                    stream::substream(master_seed, trial as u64, stream::TRAJECTORY_SLOT);
                let traj = simulate(sys, horizon, &mut traj_rng)?;
                let mut decision_rng = stream::substream(master_seed, trial as u64, decision_slot);
                let records = estimator.run(sys, &traj, &mut decision_rng)?;
                Ok(TrialSeries::from_records(&records))
            })
            .collect()
    });
    Ok(TrialMatrix {
        series: series?,
        horizon,
    })
}

/// One row of a per-step dump.
#[derive(Debug, Clone)]
pub struct StepDump {
    pub trial: usize,
    pub step: usize,
    pub sent: bool,
    pub rho: f64,
    pub no_send_probability: f64,
    pub squared_error: f64,
}

/// Aggregated output of one `(estimator, scale)` cell.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub estimator: String,
    pub c: f64,
    pub metrics: MetricsAccumulator,
    pub steps: Vec<StepDump>,
}

fn step_dumps(matrix: &TrialMatrix) -> Vec<StepDump> {
    let mut rows = Vec::with_capacity(matrix.trials() * matrix.horizon);
    for (trial, s) in matrix.series.iter().enumerate() {
        for j in 0..matrix.horizon {
            rows.push(StepDump {
                trial,
                step: j + 1,
                sent: s.sent[j],
                rho: s.rho[j],
                no_send_probability: s.no_send_probability[j],
                squared_error: s.squared_error[j],
            });
        }
    }
    rows
}

/// Runs the full experiment: every estimator in the configured set at every
/// trigger scale. Within a trial the same trajectory realization is shared
/// across estimators (common random numbers); the random baseline is
/// rate-matched to the triggered filter unless a send probability is pinned.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunOutput>, HarnessError> {
    cfg.validate()?;
    let registry = EstimatorRegistry::builtin();
    let mut outputs = Vec::with_capacity(cfg.c_grid.len() * cfg.estimators.len());
    for &c in &cfg.c_grid {
        let (sys, trigger) = cfg.scenario.build(c)?;
        let pset_index = cfg.estimators.iter().position(|n| n == "pset");
        let pset_matrix = match pset_index {
            Some(index) => {
                let est = PsetKf::new(trigger.clone());
                Some(run_trials(
                    &est,
                    &sys,
                    cfg.trials,
                    cfg.horizon,
                    cfg.master_seed,
                    stream::FIRST_DECISION_SLOT + index as u64,
                )?)
            }
            None => None,
        };
        let send_prob = cfg.random_send_prob.unwrap_or_else(|| {
            pset_matrix
                .as_ref()
                .map(TrialMatrix::empirical_rate)
                .unwrap_or(0.5)
        });
        let ctx = EstimatorContext {
            trigger: trigger.clone(),
            send_prob,
        };
        let mut pset_matrix = pset_matrix;
        for (index, name) in cfg.estimators.iter().enumerate() {
            let matrix = if name == "pset" {
                pset_matrix.take().expect("pset matrix computed above")
            } else {
                let est = registry.create(name, &ctx)?;
                run_trials(
                    est.as_ref(),
                    &sys,
                    cfg.trials,
                    cfg.horizon,
                    cfg.master_seed,
                    stream::FIRST_DECISION_SLOT + index as u64,
                )?
            };
            let steps = if cfg.collect_steps {
                step_dumps(&matrix)
            } else {
                Vec::new()
            };
            outputs.push(RunOutput {
                estimator: name.clone(),
                c,
                metrics: matrix.metrics(),
                steps,
            });
        }
    }
    Ok(outputs)
}

/// One row of a rate sweep: certified bounds plus the empirical rate.
#[derive(Debug, Clone, Copy)]
pub struct RateSweepRow {
    pub c: f64,
    pub rate_lower: f64,
    pub rate_upper: f64,
    pub empirical_rate: f64,
}

/// Certified rate bounds and empirical long-run rates over a scale grid.
pub fn sweep_rate_bounds(
    scenario: Scenario,
    c_grid: &[f64],
    trials: usize,
    horizon: usize,
    master_seed: u64,
    tol: f64,
) -> Result<Vec<RateSweepRow>, HarnessError> {
    let mut rows = Vec::with_capacity(c_grid.len());
    for &c in c_grid {
        let (sys, trigger) = scenario.build(c)?;
        let bounds = analysis::rate_bounds(&sys, &trigger, tol)?;
        let est = PsetKf::new(trigger);
        let matrix = run_trials(
            &est,
            &sys,
            trials,
            horizon,
            master_seed,
            stream::FIRST_DECISION_SLOT,
        )?;
        rows.push(RateSweepRow {
            c,
            rate_lower: bounds.rate_lower,
            rate_upper: bounds.rate_upper,
            empirical_rate: matrix.empirical_rate(),
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Grid-quadrature posterior oracle
// ---------------------------------------------------------------------------

/// Grid for the scalar posterior oracle: `points` nodes spanning
/// `±span_sigmas` prior standard deviations around the prior mean.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub points: usize,
    pub span_sigmas: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points: 16_001,
            span_sigmas: 8.0,
        }
    }
}

/// Worst-case oracle deviations over the checked steps.
#[derive(Debug, Clone, Copy)]
pub struct PosteriorCheck {
    pub steps: usize,
    /// max |oracle mean - prior mean| (the no-send posterior keeps the prior mean).
    pub max_mean_abs_dev: f64,
    /// max relative deviation between the oracle variance and the closed form.
    pub max_var_rel_dev: f64,
    /// max |no-send mass - (1 - f_k)|.
    pub max_mass_abs_dev: f64,
}

impl PosteriorCheck {
    pub fn within_tolerances(&self) -> bool {
        self.max_mean_abs_dev <= POSTERIOR_MEAN_TOL
            && self.max_var_rel_dev <= POSTERIOR_VAR_RTOL
            && self.max_mass_abs_dev <= POSTERIOR_MASS_TOL
    }
}

/// Independent check of the no-send posterior on a scalar system.
///
/// At each filter step the no-send conditional is recomputed by brute-force
/// Bayes on a dense grid: the prior density is multiplied by the no-send
/// likelihood, itself obtained by Gauss-Hermite integration of the trigger
/// score over the measurement noise, then normalized numerically. Mean,
/// variance and total mass are compared against the closed-form recursion.
pub fn verify_posterior(
    sys: &LtiSystem,
    cfg: &TriggerConfig,
    steps: usize,
    grid: &GridSpec,
    seed: u64,
) -> Result<PosteriorCheck, HarnessError> {
    verify_posterior_opts(sys, cfg, steps, grid, seed, false)
}

/// [`verify_posterior`] with an optional injected sign-flip fault in the
/// closed-form no-send covariance correction. The fault must trip the
/// variance tolerance; it exists to prove the oracle can detect a wrong
/// update, and is exposed through the CLI for the same purpose.
pub fn verify_posterior_opts(
    sys: &LtiSystem,
    cfg: &TriggerConfig,
    steps: usize,
    grid: &GridSpec,
    seed: u64,
    inject_correction_fault: bool,
) -> Result<PosteriorCheck, HarnessError> {
    if sys.state_dim() != 1 || sys.measurement_dim() != 1 {
        return Err(HarnessError::ScalarSystemRequired {
            n: sys.state_dim(),
            m: sys.measurement_dim(),
        });
    }
    if grid.points < 10_000 {
        return Err(HarnessError::InvalidGrid(format!(
            "need at least 10000 grid points, got {}",
            grid.points
        )));
    }
    if grid.span_sigmas < 8.0 {
        return Err(HarnessError::InvalidGrid(format!(
            "grid must span at least 8 standard deviations, got {}",
            grid.span_sigmas
        )));
    }
    if steps == 0 {
        return Err(HarnessError::InvalidGrid("steps must be >= 1".into()));
    }
    // Simpson integration needs an odd node count.
    let points = if grid.points.is_multiple_of(2) {
        grid.points + 1
    } else {
        grid.points
    };
    let (gh_nodes, gh_weights) = gauss_hermite(128);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut truth = crate::matgauss::sample_gaussian(sys.x0(), &mut rng)?[0];
    let mut state = FilterState::initial(sys);
    let a = sys.a()[(0, 0)];
    let c = sys.c()[(0, 0)];
    let q = sys.q()[(0, 0)];
    let r = sys.r()[(0, 0)];

    let mut check = PosteriorCheck {
        steps,
        max_mean_abs_dev: 0.0,
        max_var_rel_dev: 0.0,
        max_mass_abs_dev: 0.0,
    };

    for k in 1..=steps {
        let prior = predict(&state, sys);
        let xp = prior.mean()[0];
        let pp = prior.cov_matrix()[(0, 0)];
        let tm = trigger_moments(prior.cov_matrix(), sys, cfg)?;
        let p1 = tm.p1[(0, 0)];
        let p0_closed = if inject_correction_fault {
            // Correction applied with the wrong sign.
            2.0 * p1 - tm.p0[(0, 0)]
        } else {
            tm.p0[(0, 0)]
        };
        let gram = tm.gram[(0, 0)];
        let rho = tm.rho;

        // Grid over the state, spanning the prior.
        let sigma = pp.sqrt();
        let half = grid.span_sigmas * sigma;
        let h = 2.0 * half / (points - 1) as f64;
        let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sigma);
        let sqrt2r = (2.0 * r).sqrt();
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();

        let mut prior_mass = SimpsonAccumulator::new(h);
        let mut mass = SimpsonAccumulator::new(h);
        let mut first = SimpsonAccumulator::new(h);
        let mut second = SimpsonAccumulator::new(h);
        for i in 0..points {
            let x = xp - half + h * i as f64;
            let w_prior = norm * (-0.5 * (x - xp) * (x - xp) / pp).exp();
            // No-send likelihood: integrate the trigger score over v ~ N(0, R).
            let e = c * (x - xp);
            let mut like = 0.0;
            for (t, w) in gh_nodes.iter().zip(gh_weights.iter()) {
                let eps = e + sqrt2r * t;
                like += w * (-0.5 * (gram * eps * eps + rho)).exp();
            }
            like *= inv_sqrt_pi;
            let qx = w_prior * like;
            let node_weight = simpson_weight(i, points);
            prior_mass.add(node_weight * w_prior);
            mass.add(node_weight * qx);
            first.add(node_weight * qx * x);
            second.add(node_weight * qx * x * x);
        }
        let prior_mass = prior_mass.value();
        let mass_dev = (prior_mass - 1.0).abs();
        if mass_dev > 1e-6 {
            return Err(HarnessError::GridTooCoarse {
                mass_deviation: mass_dev,
            });
        }
        let z_mass = mass.value();
        let mean_oracle = first.value() / z_mass;
        let var_oracle = second.value() / z_mass - mean_oracle * mean_oracle;

        check.max_mean_abs_dev = check.max_mean_abs_dev.max((mean_oracle - xp).abs());
        check.max_var_rel_dev = check
            .max_var_rel_dev
            .max((var_oracle - p0_closed).abs() / p0_closed.abs());
        let f_k = analysis::transmission_probability(&prior, sys, cfg)?;
        check.max_mass_abs_dev = check.max_mass_abs_dev.max((z_mass - (1.0 - f_k)).abs());

        // Advance the filter on a simulated step.
        truth = a * truth + q.sqrt() * standard_normal(&mut rng);
        let z = DVector::from_row_slice(&[c * truth + r.sqrt() * standard_normal(&mut rng)]);
        let theta: f64 = StandardUniform.sample(&mut rng);
        let eval = evaluate_trigger(&prior, &z, sys, cfg, theta)?;
        state = update(&prior, &eval, eval.send.then_some(&z), sys, k)?;
    }
    Ok(check)
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rand_distr::StandardNormal.sample(rng)
}

struct SimpsonAccumulator {
    acc: Compensated,
    h: f64,
}

impl SimpsonAccumulator {
    fn new(h: f64) -> Self {
        Self {
            acc: Compensated::default(),
            h,
        }
    }

    fn add(&mut self, weighted_value: f64) {
        self.acc.add(weighted_value);
    }

    fn value(&self) -> f64 {
        self.acc.value() * self.h / 3.0
    }
}

fn simpson_weight(i: usize, points: usize) -> f64 {
    if i == 0 || i == points - 1 {
        1.0
    } else if i % 2 == 1 {
        4.0
    } else {
        2.0
    }
}

/// Gauss-Hermite nodes and weights for `∫ f(t) e^{-t²} dt ≈ Σ w_i f(t_i)`,
/// by the Golub-Welsch eigenvalue method.
fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let b = (i as f64 / 2.0).sqrt();
        jacobi[(i, i - 1)] = b;
        jacobi[(i - 1, i)] = b;
    }
    let eig = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let node = eig.eigenvalues[i];
            let v0 = eig.eigenvectors[(0, i)];
            (node, std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

// ---------------------------------------------------------------------------
// Randomized identity batteries
// ---------------------------------------------------------------------------

/// Result of one randomized identity battery.
#[derive(Debug, Clone)]
pub struct BatteryReport {
    pub name: &'static str,
    pub instances: usize,
    /// Worst observed violation (relative error or negative-eigenvalue
    /// magnitude, depending on the battery).
    pub worst: f64,
    pub tolerance: f64,
}

impl BatteryReport {
    pub fn pass(&self) -> bool {
        self.worst <= self.tolerance
    }
}

/// `E - E(E+F)⁻¹E = F - F(E+F)⁻¹F ⪰ 0` for `E ⪰ 0`, `F ≻ 0`.
pub fn information_identity_battery(instances: usize, seed: u64) -> BatteryReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let dim = 1 + (rng.next_u32() % 5) as usize;
        let e = random_psd(dim, 4.0, &mut rng);
        let f = random_spd(dim, 0.05, 4.0, &mut rng);
        let sum_inv = Cholesky::new(e.as_matrix() + f.as_matrix())
            .expect("E + F is PD")
            .inverse();
        let lhs = e.as_matrix() - e.as_matrix() * &sum_inv * e.as_matrix();
        let rhs = f.as_matrix() - f.as_matrix() * &sum_inv * f.as_matrix();
        let scale = lhs.amax().max(rhs.amax()).max(1.0);
        worst = worst.max((&lhs - &rhs).amax() / scale);
        let min = symmetrize(&lhs).symmetric_eigen().eigenvalues.min();
        worst = worst.max((-min / scale).max(0.0));
    }
    BatteryReport {
        name: "information-form exchange identity",
        instances,
        worst,
        tolerance: 1e-9,
    }
}

/// `Det(EF + I) ≥ Det(HD + I)` for `E ⪰ H ⪰ 0`, `F ⪰ D ⪰ 0`.
pub fn determinant_monotonicity_battery(instances: usize, seed: u64) -> BatteryReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let dim = 1 + (rng.next_u32() % 5) as usize;
        let h = random_psd(dim, 2.0, &mut rng);
        let d = random_psd(dim, 2.0, &mut rng);
        let e = h.as_matrix() + random_psd(dim, 2.0, &mut rng).as_matrix();
        let f = d.as_matrix() + random_psd(dim, 2.0, &mut rng).as_matrix();
        let id = DMatrix::identity(dim, dim);
        let det_ef = (e * f + &id).determinant();
        let det_hd = (h.as_matrix() * d.as_matrix() + &id).determinant();
        worst = worst.max((det_hd - det_ef) / det_ef.abs().max(1.0));
    }
    BatteryReport {
        name: "determinant product monotonicity",
        instances,
        worst,
        tolerance: 1e-9,
    }
}

/// `Tr(X(X+aI)⁻¹X) ≤ Tr(Y(Y+aI)⁻¹Y)` for `Y ⪰ X ⪰ 0`, `a > 0`.
pub fn trace_monotonicity_battery(instances: usize, seed: u64) -> BatteryReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let dim = 1 + (rng.next_u32() % 5) as usize;
        let x = random_psd(dim, 3.0, &mut rng);
        let y = x.as_matrix() + random_psd(dim, 3.0, &mut rng).as_matrix();
        let a = {
            let u: f64 = StandardUniform.sample(&mut rng);
            1e-3 + 10.0 * u
        };
        let id = DMatrix::identity(dim, dim);
        let tx = (x.as_matrix()
            * Cholesky::new(x.as_matrix() + a * &id).unwrap().inverse()
            * x.as_matrix())
        .trace();
        let ty = (&y * Cholesky::new(&y + a * &id).unwrap().inverse() * &y).trace();
        worst = worst.max((tx - ty) / ty.abs().max(1.0));
    }
    BatteryReport {
        name: "resolvent trace monotonicity",
        instances,
        worst,
        tolerance: 1e-9,
    }
}

fn random_full_row_rank_system<Rng1: Rng + ?Sized>(
    rng: &mut Rng1,
) -> (LtiSystem, TriggerConfig, DMatrix<f64>) {
    loop {
        let n = 2 + (rng.next_u32() % 3) as usize;
        let m = 1 + (rng.next_u32() % n as u32) as usize;
        let a = DMatrix::from_fn(n, n, |_, _| standard_normal(rng) * 0.6);
        let c = DMatrix::from_fn(m, n, |_, _| standard_normal(rng));
        let sv = c.clone().singular_values();
        if sv.min() < 1e-3 * sv.max() {
            continue;
        }
        let q = random_spd(n, 0.1, 2.0, rng);
        let r = random_spd(m, 0.1, 2.0, rng);
        let x0 = GaussianBelief::from_spd(DVector::zeros(n), SpdMatrix::identity(n)).unwrap();
        let prior_cov = random_spd(n, 0.2, 3.0, rng).into_inner();
        let sys = match LtiSystem::new(a, c, q, r, x0) {
            Ok(s) => s,
            Err(_) => continue,
        };
        let gamma = random_spd(n, 0.1, 3.0, rng);
        return (sys, TriggerConfig::new(gamma), prior_cov);
    }
}

/// The no-send covariance computed two ways: through the posterior route
/// `(P⁻¹ + CᵀR⁻¹C)⁻¹ + K(KᵀΓK + S_z⁻¹)⁻¹Kᵀ` and through the joint update
/// route `(I-KC)P + K(S_z⁻¹ + KᵀΓK)⁻¹Kᵀ`.
pub fn covariance_identity_battery(instances: usize, seed: u64) -> BatteryReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let (sys, cfg, prior_cov) = random_full_row_rank_system(&mut rng);
        let tm = trigger_moments(&prior_cov, &sys, &cfg).expect("moments");
        // Information-form route for P¹.
        let p_inv = Cholesky::new(prior_cov.clone()).unwrap().inverse();
        let r_inv = Cholesky::new(sys.r().clone()).unwrap().inverse();
        let p1_info = Cholesky::new(symmetrize(
            &(&p_inv + sys.c().transpose() * &r_inv * sys.c()),
        ))
        .unwrap()
        .inverse();
        let s_z_inv = Cholesky::new(tm.innovation_cov.clone()).unwrap().inverse();
        let correction = &tm.gain
            * Cholesky::new(symmetrize(&(&tm.gram + &s_z_inv)))
                .unwrap()
                .inverse()
            * tm.gain.transpose();
        let p0_info = symmetrize(&(&p1_info + &correction));
        let rel = (&p0_info - &tm.p0).norm() / tm.p0.norm();
        worst = worst.max(rel);
    }
    BatteryReport {
        name: "no-send covariance two-route equivalence",
        instances,
        worst,
        tolerance: 1e-9,
    }
}

/// The one-step prediction of the no-send posterior equals the inversion-
/// lemma form `APAᵀ + Q - APCᵀ(CPCᵀ + R + (KᵀΓK)⁻¹)⁻¹CPAᵀ`.
pub fn prediction_identity_battery(instances: usize, seed: u64) -> BatteryReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let (sys, cfg, prior_cov) = random_full_row_rank_system(&mut rng);
        let tm = trigger_moments(&prior_cov, &sys, &cfg).expect("moments");
        let direct = symmetrize(&(sys.a() * &tm.p0 * sys.a().transpose() + sys.q()));
        let gram_inv = Cholesky::new(tm.gram.clone())
            .expect("full row rank")
            .inverse();
        let resolvent = Cholesky::new(symmetrize(&(&tm.innovation_cov + &gram_inv)))
            .unwrap()
            .inverse();
        let cpa = sys.c() * &prior_cov * sys.a().transpose();
        let rearranged = symmetrize(
            &(sys.a() * &prior_cov * sys.a().transpose() + sys.q()
                - cpa.transpose() * resolvent * &cpa),
        );
        let rel = (&direct - &rearranged).norm() / direct.norm();
        worst = worst.max(rel);
    }
    BatteryReport {
        name: "no-send prediction inversion-lemma form",
        instances,
        worst,
        tolerance: 1e-8,
    }
}

/// Full verification pass: the scalar posterior oracle plus every battery.
#[derive(Debug, Clone)]
pub struct VerificationOutcome {
    pub posterior: PosteriorCheck,
    pub batteries: Vec<BatteryReport>,
}

impl VerificationOutcome {
    pub fn pass(&self) -> bool {
        self.posterior.within_tolerances() && self.batteries.iter().all(BatteryReport::pass)
    }
}

/// Runs the posterior oracle on the unit scalar system (50 consecutive
/// steps) and the five identity batteries.
pub fn run_verification(
    battery_instances: usize,
    grid: &GridSpec,
    seed: u64,
    inject_fault: bool,
) -> Result<VerificationOutcome, HarnessError> {
    let sys = LtiSystem::new(
        DMatrix::from_row_slice(1, 1, &[1.0]),
        DMatrix::from_row_slice(1, 1, &[1.0]),
        SpdMatrix::identity(1),
        SpdMatrix::identity(1),
        GaussianBelief::from_spd(DVector::zeros(1), SpdMatrix::identity(1)).unwrap(),
    )?;
    let cfg = TriggerConfig::new(SpdMatrix::identity(1));
    let posterior = verify_posterior_opts(&sys, &cfg, 50, grid, seed, inject_fault)?;
    let batteries = vec![
        information_identity_battery(battery_instances, seed.wrapping_add(1)),
        determinant_monotonicity_battery(battery_instances, seed.wrapping_add(2)),
        trace_monotonicity_battery(battery_instances, seed.wrapping_add(3)),
        covariance_identity_battery(battery_instances, seed.wrapping_add(4)),
        prediction_identity_battery(battery_instances, seed.wrapping_add(5)),
    ];
    Ok(VerificationOutcome {
        posterior,
        batteries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            scenario: Scenario::TargetTracking,
            c_grid: vec![12.0],
            trials: 3,
            horizon: 8,
            master_seed: 11,
            estimators: vec!["pset".into(), "kf".into(), "random".into()],
            random_send_prob: None,
            collect_steps: true,
        }
    }

    #[test]
    fn experiment_is_deterministic() {
        let cfg = tiny_config();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.estimator, y.estimator);
            assert_eq!(x.metrics.e_k, y.metrics.e_k);
            assert_eq!(x.metrics.t_k, y.metrics.t_k);
            assert_eq!(x.metrics.rate, y.metrics.rate);
        }
    }

    #[test]
    fn always_send_estimator_reports_unit_rate() {
        let mut cfg = tiny_config();
        cfg.estimators = vec!["kf".into()];
        let outputs = run_experiment(&cfg).unwrap();
        assert_eq!(outputs.len(), 1);
        assert_eq!(outputs[0].metrics.rate, 1.0);
    }

    #[test]
    fn config_validation_rejects_bad_inputs() {
        let mut cfg = tiny_config();
        cfg.trials = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = tiny_config();
        cfg.c_grid = vec![-1.0];
        assert!(cfg.validate().is_err());

        let mut cfg = tiny_config();
        cfg.estimators = vec!["pset".into(), "pset".into()];
        assert!(cfg.validate().is_err());

        let mut cfg = tiny_config();
        cfg.estimators = vec!["nope".into()];
        assert!(cfg.validate().is_err());
    }

    /// Single-trial, single-step, noise-free system: E(1) can be recomputed
    /// by hand from one Kalman update.
    #[test]
    fn single_step_metrics_match_hand_recursion() {
        let cfg = ExperimentConfig {
            scenario: Scenario::TargetTracking,
            c_grid: vec![1.0],
            trials: 1,
            horizon: 1,
            master_seed: 5,
            estimators: vec!["kf".into()],
            random_send_prob: None,
            collect_steps: false,
        };
        let outputs = run_experiment(&cfg).unwrap();
        let metrics = &outputs[0].metrics;

        // Recompute the single trial by hand.
        let (sys, _) = Scenario::TargetTracking.build(1.0).unwrap();
        let mut traj_rng = stream::substream(5, 0, stream::TRAJECTORY_SLOT);
        let traj = simulate(&sys, 1, &mut traj_rng).unwrap();
        let state = FilterState::initial(&sys);
        let prior = predict(&state, &sys);
        let k = crate::pset::kalman_gain(&prior, &sys).unwrap();
        let z = &traj.measurements()[0];
        let mean = prior.mean() + &k * (z - sys.c() * prior.mean());
        let err = (&traj.states()[0] - &mean).norm();
        assert_relative_eq!(metrics.e_k[0], err, epsilon = 1e-12);
    }

    #[test]
    fn oracle_accepts_vanishing_weight() {
        // Γ -> 0: the no-send posterior reduces to the prior, and the oracle
        // must agree with the closed form there too.
        let sys = LtiSystem::new(
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            SpdMatrix::identity(1),
            SpdMatrix::identity(1),
            GaussianBelief::from_spd(DVector::zeros(1), SpdMatrix::identity(1)).unwrap(),
        )
        .unwrap();
        let cfg =
            TriggerConfig::new(SpdMatrix::new(DMatrix::from_row_slice(1, 1, &[1e-10])).unwrap());
        let check = verify_posterior(&sys, &cfg, 5, &GridSpec::default(), 3).unwrap();
        assert!(check.within_tolerances());
        // And the closed form itself collapses to the prior.
        let prior = GaussianBelief::new(
            DVector::zeros(1),
            crate::matgauss::PsdMatrix::new(DMatrix::from_row_slice(1, 1, &[2.0])).unwrap(),
        )
        .unwrap();
        let tm = trigger_moments(prior.cov_matrix(), &sys, &cfg).unwrap();
        assert_relative_eq!(tm.p0[(0, 0)], 2.0, epsilon = 1e-6);
    }

    #[test]
    fn oracle_rejects_vector_systems() {
        let (sys, cfg) = Scenario::TargetTracking.build(1.0).unwrap();
        assert!(matches!(
            verify_posterior(&sys, &cfg, 5, &GridSpec::default(), 3),
            Err(HarnessError::ScalarSystemRequired { .. })
        ));
    }

    #[test]
    fn oracle_rejects_coarse_grids() {
        let sys = LtiSystem::new(
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            SpdMatrix::identity(1),
            SpdMatrix::identity(1),
            GaussianBelief::from_spd(DVector::zeros(1), SpdMatrix::identity(1)).unwrap(),
        )
        .unwrap();
        let cfg = TriggerConfig::new(SpdMatrix::identity(1));
        let grid = GridSpec {
            points: 100,
            span_sigmas: 8.0,
        };
        assert!(matches!(
            verify_posterior(&sys, &cfg, 5, &grid, 3),
            Err(HarnessError::InvalidGrid(_))
        ));
    }

    #[test]
    fn rate_sweep_rows_bracket_the_empirical_rate() {
        let rows = sweep_rate_bounds(
            Scenario::TargetTracking,
            &[0.06, 12.0, 220.0],
            30,
            100,
            19,
            1e-10,
        )
        .unwrap();
        assert_eq!(rows.len(), 3);
        for row in &rows {
            assert!(
                row.rate_lower - 0.02 <= row.empirical_rate
                    && row.empirical_rate <= row.rate_upper + 0.02,
                "c={}: {} outside [{}, {}]",
                row.c,
                row.empirical_rate,
                row.rate_lower,
                row.rate_upper
            );
        }
        // Empirical rates rise toward the grid ends.
        assert!(rows[0].empirical_rate < 0.2);
        assert!(rows[2].empirical_rate > 0.8);
    }

    #[test]
    fn injected_fault_is_caught() {
        let outcome = run_verification(25, &GridSpec::default(), 7, true).unwrap();
        assert!(!outcome.pass());
        assert!(outcome.posterior.max_var_rel_dev > POSTERIOR_VAR_RTOL);
    }

    #[test]
    fn gauss_hermite_integrates_polynomials() {
        let (nodes, weights) = gauss_hermite(32);
        // ∫ e^{-t²} dt = √π, ∫ t² e^{-t²} dt = √π / 2.
        let total: f64 = weights.iter().sum();
        assert_relative_eq!(total, std::f64::consts::PI.sqrt(), epsilon = 1e-10);
        let second: f64 = nodes
            .iter()
            .zip(weights.iter())
            .map(|(t, w)| w * t * t)
            .sum();
        assert_relative_eq!(second, std::f64::consts::PI.sqrt() / 2.0, epsilon = 1e-10);
    }
}
