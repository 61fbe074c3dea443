//! Offline analysis of the triggered estimator: Riccati bound sequences and
//! their fixed points, transmission probability, communication-rate bounds,
//! and a Monte Carlo study of the trigger-exponent ratio.
//!
//! Two rate-bound flavors coexist:
//!
//! - [`rate_bounds`]: certified bounds: the upper bound evaluates the rate
//!   expressions at the worst-case covariance fixed point `P_u` obtained
//!   through the gain lower bound `Θ`. These always bracket the empirical
//!   rate but the upper bound is conservative.
//! - [`rate_window`] / [`rate_interval`]: the tight selection window: both
//!   rate expressions evaluated at the always-transmit fixed point `P_l`.
//!   This is the curve pair meant for choosing the trigger scale against a
//!   target rate; it is not a guaranteed envelope.

use nalgebra::{Cholesky, DMatrix};
use rand::distr::{Distribution, StandardUniform};
use rayon::prelude::*;
use thiserror::Error;

use crate::matgauss::{symmetrize, GaussianBelief, MatrixError, SpdMatrix};
use crate::model::{simulate, LtiSystem, ModelError, Scenario};
use crate::pset::{trigger_moments, FilterError, TriggerConfig};
use crate::stream;

/// Default relative residual for fixed-point iteration.
pub const FIXED_POINT_TOL: f64 = 1e-10;

/// Default iteration cap for fixed-point solves.
pub const FIXED_POINT_MAX_ITER: usize = 100_000;

/// Floor below which the trigger covariance term counts as degenerate.
pub const RHO_FLOOR: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("C must have full row rank for this bound")]
    CNotFullRowRank,
    #[error("inner matrix C X Cᵀ + Y is singular")]
    InnerMatrixSingular,
    #[error("fixed-point iteration exceeded {iterations} iterations (residual {residual:.3e})")]
    MaxIterationsExceeded { iterations: usize, residual: f64 },
    #[error("trigger covariance term degenerated at trial {trial}, step {step} (rho {rho:.3e})")]
    DegenerateRho { trial: usize, step: usize, rho: f64 },
    #[error("the ratio study needs at least 100 trials, got {trials}")]
    TooFewTrials { trials: usize },
    #[error("rate curve is not monotone over the scan grid")]
    NonMonotoneRateCurve,
    #[error("target rate must lie in [0, 1), got {0}")]
    TargetRateOutOfRange(f64),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Parameters of the covariance recursion
/// `G_Y(X) = A X Aᵀ + Q - A X Cᵀ (C X Cᵀ + Y)⁻¹ C X Aᵀ`.
#[derive(Debug, Clone)]
pub struct RiccatiParams {
    a: DMatrix<f64>,
    c: DMatrix<f64>,
    q: DMatrix<f64>,
    y: SpdMatrix,
}

impl RiccatiParams {
    pub fn new(sys: &LtiSystem, y: SpdMatrix) -> Result<Self, AnalysisError> {
        if y.dim() != sys.measurement_dim() {
            return Err(MatrixError::DimensionMismatch {
                expected: sys.measurement_dim(),
                found: y.dim(),
            }
            .into());
        }
        Ok(Self {
            a: sys.a().clone(),
            c: sys.c().clone(),
            q: sys.q().clone(),
            y,
        })
    }
}

fn g_y_raw(x: &DMatrix<f64>, params: &RiccatiParams) -> Result<DMatrix<f64>, AnalysisError> {
    let inner = symmetrize(&(&params.c * x * params.c.transpose() + params.y.as_matrix()));
    let chol = Cholesky::new(inner).ok_or(AnalysisError::InnerMatrixSingular)?;
    let cxa = &params.c * x * params.a.transpose();
    let next =
        &params.a * x * params.a.transpose() + &params.q - cxa.transpose() * chol.solve(&cxa);
    Ok(symmetrize(&next))
}

/// One application of `G_Y`. The output dominates `Q`, hence is SPD whenever
/// `Q` is.
pub fn riccati_step(
    x: &crate::matgauss::PsdMatrix,
    params: &RiccatiParams,
) -> Result<SpdMatrix, AnalysisError> {
    let next = g_y_raw(x.as_matrix(), params)?;
    Ok(SpdMatrix::new(next)?)
}

/// Gain lower bound `Θ` evaluated at a covariance `p_lower`:
///
/// `Θ = λ_min(Γ)/λ_max(CᵀC) · (I + (1/δ) B B + R R + δ R B B R)⁻¹`
///
/// with `B = (C P C ᵀ)⁻¹` and `δ = √Tr(BB) / √Tr(RBBR)`. The assembled sum
/// is symmetrized; residual asymmetry above 1e-8 is logged.
pub fn theta_for(
    p_lower: &DMatrix<f64>,
    sys: &LtiSystem,
    cfg: &TriggerConfig,
) -> Result<SpdMatrix, AnalysisError> {
    if !sys.c_full_row_rank() {
        return Err(AnalysisError::CNotFullRowRank);
    }
    let m = sys.measurement_dim();
    let r = sys.r();
    let cpc = symmetrize(&(sys.c() * p_lower * sys.c().transpose()));
    let b = Cholesky::new(cpc)
        .ok_or(AnalysisError::InnerMatrixSingular)?
        .inverse();
    let bb = &b * &b;
    let rbbr = r * &bb * r;
    let delta = bb.trace().sqrt() / rbbr.trace().sqrt();
    let sum = DMatrix::identity(m, m) + (1.0 / delta) * &bb + r * r + delta * &rbbr;
    let asym = (&sum - sum.transpose()).amax() / sum.amax().max(1.0);
    if asym > 1e-8 {
        log::warn!("gain-bound assembly asymmetry {asym:.3e} exceeds 1e-8");
    }
    let inv = Cholesky::new(symmetrize(&sum))
        .ok_or(AnalysisError::InnerMatrixSingular)?
        .inverse();
    let ctc = symmetrize(&(sys.c().transpose() * sys.c()));
    let lmax_ctc = ctc.symmetric_eigen().eigenvalues.max();
    let theta = (cfg.gamma().min_eigenvalue() / lmax_ctc) * inv;
    Ok(SpdMatrix::new(symmetrize(&theta))?)
}

/// The lower/upper covariance bound sequences, index `i` holding step
/// `k = i + 1`. Both start at `A P₀ Aᵀ + Q`; the lower iterates `G_R`, the
/// upper iterates `G_{R+Θ_k⁻¹}` with `Θ_k` recomputed from the lower bound
/// at each step.
#[derive(Debug, Clone)]
pub struct BoundSequences {
    pub lower: Vec<DMatrix<f64>>,
    pub upper: Vec<DMatrix<f64>>,
}

pub fn bound_sequences(
    sys: &LtiSystem,
    cfg: &TriggerConfig,
    k_max: usize,
) -> Result<BoundSequences, AnalysisError> {
    if !sys.c_full_row_rank() {
        return Err(AnalysisError::CNotFullRowRank);
    }
    let params_r = RiccatiParams::new(sys, SpdMatrix::new(sys.r().clone())?)?;
    let first = symmetrize(&(sys.a() * sys.x0().cov_matrix() * sys.a().transpose() + sys.q()));
    let mut lower = Vec::with_capacity(k_max);
    let mut upper = Vec::with_capacity(k_max);
    lower.push(first.clone());
    upper.push(first);
    for _ in 1..k_max {
        let next_lower = g_y_raw(lower.last().unwrap(), &params_r)?;
        let theta = theta_for(&next_lower, sys, cfg)?;
        let theta_inv = Cholesky::new(theta.as_matrix().clone())
            .ok_or(AnalysisError::InnerMatrixSingular)?
            .inverse();
        let params_up =
            RiccatiParams::new(sys, SpdMatrix::new(symmetrize(&(sys.r() + theta_inv)))?)?;
        let next_upper = g_y_raw(upper.last().unwrap(), &params_up)?;
        lower.push(next_lower);
        upper.push(next_upper);
    }
    Ok(BoundSequences { lower, upper })
}

/// Fixed points of the two bound recursions.
#[derive(Debug, Clone)]
pub struct FixedPointSolution {
    /// Unique PD solution of `G_R(X) = X`.
    pub p_lower: SpdMatrix,
    /// Unique PD solution of `G_{R+Θ⁻¹}(X) = X`, with `Θ` evaluated at `p_lower`.
    pub p_upper: SpdMatrix,
    pub theta: SpdMatrix,
    pub iterations: usize,
    pub residual: f64,
}

fn iterate_to_fixed_point(
    start: DMatrix<f64>,
    params: &RiccatiParams,
    tol: f64,
    max_iter: usize,
) -> Result<(DMatrix<f64>, usize, f64), AnalysisError> {
    let mut x = start;
    let mut residual = f64::INFINITY;
    for i in 1..=max_iter {
        let next = g_y_raw(&x, params)?;
        residual = (&next - &x).norm() / next.norm().max(1.0);
        x = next;
        if residual <= tol {
            return Ok((x, i, residual));
        }
    }
    Err(AnalysisError::MaxIterationsExceeded {
        iterations: max_iter,
        residual,
    })
}

pub fn fixed_points(
    sys: &LtiSystem,
    cfg: &TriggerConfig,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointSolution, AnalysisError> {
    if !sys.c_full_row_rank() {
        return Err(AnalysisError::CNotFullRowRank);
    }
    let start = symmetrize(&(sys.a() * sys.x0().cov_matrix() * sys.a().transpose() + sys.q()));
    let params_r = RiccatiParams::new(sys, SpdMatrix::new(sys.r().clone())?)?;
    let (p_lower, it_lower, res_lower) =
        iterate_to_fixed_point(start.clone(), &params_r, tol, max_iter)?;
    let theta = theta_for(&p_lower, sys, cfg)?;
    let theta_inv = Cholesky::new(theta.as_matrix().clone())
        .ok_or(AnalysisError::InnerMatrixSingular)?
        .inverse();
    let params_up = RiccatiParams::new(sys, SpdMatrix::new(symmetrize(&(sys.r() + theta_inv)))?)?;
    let (p_upper, it_upper, res_upper) = iterate_to_fixed_point(start, &params_up, tol, max_iter)?;
    Ok(FixedPointSolution {
        p_lower: SpdMatrix::new(p_lower)?,
        p_upper: SpdMatrix::new(p_upper)?,
        theta,
        iterations: it_lower + it_upper,
        residual: res_lower.max(res_upper),
    })
}

/// Transmission probability conditional on the prior:
///
/// `f = 1 - exp{-ϱ/2} / √Det((C P Cᵀ + R) KᵀΓK + I)`, clamped to `[0, 1]`.
pub fn transmission_probability(
    prior: &GaussianBelief,
    sys: &LtiSystem,
    cfg: &TriggerConfig,
) -> Result<f64, FilterError> {
    let tm = trigger_moments(prior.cov_matrix(), sys, cfg)?;
    let m = sys.measurement_dim();
    let det_arg = &tm.innovation_cov * &tm.gram + DMatrix::identity(m, m);
    let f = 1.0 - (-0.5 * tm.rho).exp() / det_arg.determinant().sqrt();
    Ok(f.clamp(0.0, 1.0))
}

/// The rate-expression pair evaluated at a covariance pair `(p_low, p_up)`:
///
/// - lower: `1 - 1/√Det(λ_min(Γ) C P_low P_low Cᵀ (C P_up Cᵀ + R)⁻¹ + I)`
/// - upper: `1 - exp{-Tr(P_up Γ)}/√Det(λ_max(Γ) C P_up P_up Cᵀ (C P_low Cᵀ + R)⁻¹ + I)`
///
/// With the step-`k` bound sequences this yields the per-step transmission
/// probability envelope; with the fixed points it yields the asymptotic rate
/// bounds.
pub fn rate_bound_pair(
    p_low: &DMatrix<f64>,
    p_up: &DMatrix<f64>,
    sys: &LtiSystem,
    cfg: &TriggerConfig,
) -> Result<(f64, f64), AnalysisError> {
    let m = sys.measurement_dim();
    let id = DMatrix::identity(m, m);
    let lmin = cfg.gamma().min_eigenvalue();
    let lmax = cfg.gamma().max_eigenvalue();
    let c = sys.c();
    let r = sys.r();

    let low_res = Cholesky::new(symmetrize(&(c * p_up * c.transpose() + r)))
        .ok_or(AnalysisError::InnerMatrixSingular)?
        .inverse();
    let det_low = (lmin * c * p_low * p_low * c.transpose() * low_res + &id).determinant();
    let rate_lower = (1.0 - 1.0 / det_low.sqrt()).clamp(0.0, 1.0);

    let up_res = Cholesky::new(symmetrize(&(c * p_low * c.transpose() + r)))
        .ok_or(AnalysisError::InnerMatrixSingular)?
        .inverse();
    let det_up = (lmax * c * p_up * p_up * c.transpose() * up_res + &id).determinant();
    let weighted_trace = (p_up * cfg.gamma().as_matrix()).trace();
    let rate_upper = (1.0 - (-weighted_trace).exp() / det_up.sqrt()).clamp(0.0, 1.0);

    Ok((rate_lower, rate_upper))
}

/// Asymptotic communication-rate bounds together with the fixed points that
/// produce them.
#[derive(Debug, Clone)]
pub struct RateBounds {
    pub theta: SpdMatrix,
    pub p_lower: SpdMatrix,
    pub p_upper: SpdMatrix,
    pub rate_lower: f64,
    pub rate_upper: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Certified rate bounds: the envelope `rate_lower ≤ ς ≤ rate_upper` holds
/// for the long-run empirical rate.
pub fn rate_bounds(
    sys: &LtiSystem,
    cfg: &TriggerConfig,
    tol: f64,
) -> Result<RateBounds, AnalysisError> {
    let fp = fixed_points(sys, cfg, tol, FIXED_POINT_MAX_ITER)?;
    let (rate_lower, rate_upper) =
        rate_bound_pair(fp.p_lower.as_matrix(), fp.p_upper.as_matrix(), sys, cfg)?;
    Ok(RateBounds {
        theta: fp.theta,
        p_lower: fp.p_lower,
        p_upper: fp.p_upper,
        rate_lower,
        rate_upper,
        iterations: fp.iterations,
        residual: fp.residual,
    })
}

/// The tight selection window: both rate expressions evaluated at the
/// always-transmit fixed point. Monotone in the trigger scale and suited to
/// choosing the scale for a target rate; not a certified envelope.
pub fn rate_window(
    sys: &LtiSystem,
    cfg: &TriggerConfig,
    tol: f64,
) -> Result<(f64, f64), AnalysisError> {
    if !sys.c_full_row_rank() {
        return Err(AnalysisError::CNotFullRowRank);
    }
    let start = symmetrize(&(sys.a() * sys.x0().cov_matrix() * sys.a().transpose() + sys.q()));
    let params_r = RiccatiParams::new(sys, SpdMatrix::new(sys.r().clone())?)?;
    let (p_l, _, _) = iterate_to_fixed_point(start, &params_r, tol, FIXED_POINT_MAX_ITER)?;
    rate_bound_pair(&p_l, &p_l, sys, cfg)
}

/// Scale interval compatible with a target rate, from inverting the window
/// curves by bisection over `log c`.
#[derive(Debug, Clone, Copy)]
pub struct RateInterval {
    /// Scale at which the upper window curve reaches the target (left end).
    pub c_at_upper: f64,
    /// Scale at which the lower window curve reaches the target (right end).
    pub c_at_lower: f64,
    /// Set when the target was outside the scanned range and the interval
    /// collapsed to a grid endpoint.
    pub degenerate: bool,
}

/// Inverts the window curves for a scenario: finds `[c̄(r), c̲(r)]` such that
/// the upper curve equals `r` at `c̄` and the lower curve equals `r` at `c̲`.
/// Monotonicity of both curves over `[c_min, c_max]` is asserted on a coarse
/// log grid before bisection.
pub fn rate_interval(
    scenario: Scenario,
    target_rate: f64,
    c_min: f64,
    c_max: f64,
    tol: f64,
) -> Result<RateInterval, AnalysisError> {
    if !(0.0..1.0).contains(&target_rate) {
        return Err(AnalysisError::TargetRateOutOfRange(target_rate));
    }
    let window_at = |c: f64| -> Result<(f64, f64), AnalysisError> {
        let (sys, cfg) = scenario.build(c)?;
        rate_window(&sys, &cfg, tol)
    };

    let scan_points = 25;
    let log_min = c_min.ln();
    let log_max = c_max.ln();
    let mut scan = Vec::with_capacity(scan_points);
    for i in 0..scan_points {
        let c = (log_min + (log_max - log_min) * i as f64 / (scan_points - 1) as f64).exp();
        scan.push(window_at(c)?);
    }
    for w in scan.windows(2) {
        if w[1].0 < w[0].0 - 1e-12 || w[1].1 < w[0].1 - 1e-12 {
            return Err(AnalysisError::NonMonotoneRateCurve);
        }
    }

    let (lo_min, hi_min) = scan[0];
    let (lo_max, hi_max) = scan[scan_points - 1];
    let bisect =
        |pick_upper: bool, at_min: f64, at_max: f64| -> Result<(f64, bool), AnalysisError> {
            if target_rate <= at_min {
                return Ok((c_min, true));
            }
            if target_rate >= at_max {
                return Ok((c_max, true));
            }
            let mut lo = log_min;
            let mut hi = log_max;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let (wl, wu) = window_at(mid.exp())?;
                let value = if pick_upper { wu } else { wl };
                if value < target_rate {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-12 {
                    break;
                }
            }
            Ok(((0.5 * (lo + hi)).exp(), false))
        };
    let (c_at_upper, deg_u) = bisect(true, hi_min, hi_max)?;
    let (c_at_lower, deg_l) = bisect(false, lo_min, lo_max)?;
    Ok(RateInterval {
        c_at_upper,
        c_at_lower,
        degenerate: deg_u || deg_l,
    })
}

/// Monte Carlo estimate of the expected ratio between the innovation term
/// and the covariance term of the trigger exponent, per step.
#[derive(Debug, Clone)]
pub struct GammaStudy {
    /// `γ̂_k` for `k = 1..=horizon` (index `k-1`).
    pub gamma_k: Vec<f64>,
    /// Standard error of each `γ̂_k`.
    pub std_err_k: Vec<f64>,
    pub trials: usize,
}

/// Estimates `γ_k = E[Tr(S P Cᵀ(CPCᵀ+R)⁻¹ C P S) / ϱ_k]` by averaging the
/// deterministic trace ratio over simulated trigger histories. The ratio is
/// never formed sample-by-sample from innovations, so no 0/0 arises; a step
/// where `ϱ_k` falls below [`RHO_FLOOR`] is reported as an error instead of
/// being dropped.
pub fn gamma_k_study(
    sys: &LtiSystem,
    cfg: &TriggerConfig,
    trials: usize,
    horizon: usize,
    master_seed: u64,
) -> Result<GammaStudy, AnalysisError> {
    if trials < 100 {
        return Err(AnalysisError::TooFewTrials { trials });
    }
    let per_trial: Result<Vec<Vec<f64>>, AnalysisError> = (0..trials)
        .into_par_iter()
        .map(|trial| gamma_single_trial(sys, cfg, horizon, master_seed, trial))
        .collect();
    let per_trial = per_trial?;

    let mut gamma_k = Vec::with_capacity(horizon);
    let mut std_err_k = Vec::with_capacity(horizon);
    let m = trials as f64;
    for k in 0..horizon {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for series in &per_trial {
            sum += series[k];
            sum_sq += series[k] * series[k];
        }
        let mean = sum / m;
        let var = ((sum_sq - sum * sum / m) / (m - 1.0)).max(0.0);
        gamma_k.push(mean);
        std_err_k.push((var / m).sqrt());
    }
    Ok(GammaStudy {
        gamma_k,
        std_err_k,
        trials,
    })
}

fn gamma_single_trial(
    sys: &LtiSystem,
    cfg: &TriggerConfig,
    horizon: usize,
    master_seed: u64,
    trial: usize,
) -> Result<Vec<f64>, AnalysisError> {
    let mut traj_rng = stream::substream(master_seed, trial as u64, stream::TRAJECTORY_SLOT);
    let traj = simulate(sys, horizon, &mut traj_rng)?;
    let mut theta_rng = stream::substream(master_seed, trial as u64, stream::FIRST_DECISION_SLOT);

    let mut mean = sys.x0().mean().clone();
    let mut cov = sys.x0().cov_matrix().clone();
    let mut phis = Vec::with_capacity(horizon);
    for k in 1..=horizon {
        let prior_mean = sys.a() * &mean;
        let prior_cov = symmetrize(&(sys.a() * &cov * sys.a().transpose() + sys.q()));
        let tm = trigger_moments(&prior_cov, sys, cfg)?;
        if tm.rho < RHO_FLOOR {
            return Err(AnalysisError::DegenerateRho {
                trial,
                step: k,
                rho: tm.rho,
            });
        }
        // Numerator Tr(S P Cᵀ S_z⁻¹ C P S) = Tr(S_z⁻¹ W Wᵀ) with W = C P S.
        let w = sys.c() * &prior_cov * cfg.gamma_sqrt().as_matrix();
        let solved = Cholesky::new(tm.innovation_cov.clone())
            .ok_or(AnalysisError::InnerMatrixSingular)?
            .solve(&w);
        let numerator = w.dot(&solved);
        phis.push(numerator / tm.rho);

        let z = &traj.measurements()[k - 1];
        let innovation = z - sys.c() * &prior_mean;
        let exponent = (&tm.gram * &innovation).dot(&innovation) + tm.rho;
        let theta: f64 = StandardUniform.sample(&mut theta_rng);
        let send = (-0.5 * exponent).exp() < theta;
        if send {
            mean = &prior_mean + &tm.gain * &innovation;
            cov = tm.p1;
        } else {
            mean = prior_mean;
            cov = tm.p0;
        }
    }
    Ok(phis)
}
