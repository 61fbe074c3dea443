//! The posterior-divergence stochastic trigger co-located with its exact
//! MMSE filter.
//!
//! At every step the sensor forms the two candidate posteriors: the standard
//! measurement update `(x¹, P¹)` and the no-send conditional `(x⁰, P⁰)`. It
//! withholds the measurement when
//!
//! `exp{-½(‖ε‖²_{KᵀΓK} + ϱ)} ≥ ϑ`,
//!
//! where `ε` is the innovation, `ϑ ~ U[0,1]`, and `ϱ` is the squared
//! weighted 2-Wasserstein distance between the zero-mean parts of the two
//! candidates. Conditioning on a withheld measurement keeps the state
//! Gaussian: the no-send posterior has the prior mean and covariance
//!
//! `P⁰ = P¹ + K (KᵀΓK + (CPCᵀ+R)⁻¹)⁻¹ Kᵀ`.
//!
//! Both sides run the identical deterministic recursion from shared initial
//! data, mirroring a reliable feedback channel, so no feedback messages are
//! simulated.

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

use crate::matgauss::{symmetrize, w2_trace_term, GaussianBelief, MatrixError, SpdMatrix};
use crate::model::LtiSystem;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("innovation covariance C P Cᵀ + R is not positive definite")]
    InnovationCovNotPD,
    #[error("decision says sent but no measurement was provided")]
    MissingMeasurement,
    #[error("decision says not sent but a measurement was provided")]
    UnexpectedMeasurement,
    #[error("trigger threshold must lie in [0, 1], got {value}")]
    ThresholdOutOfRange { value: f64 },
    #[error("send probability must lie in [0, 1], got {value}")]
    InvalidSendProbability { value: f64 },
    #[error("unknown estimator '{0}'")]
    UnknownEstimator(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Trigger weight `Γ` with its cached square root `S = Γ^{1/2}`.
#[derive(Debug, Clone)]
pub struct TriggerConfig {
    gamma: SpdMatrix,
    gamma_sqrt: SpdMatrix,
}

impl TriggerConfig {
    pub fn new(gamma: SpdMatrix) -> Self {
        let gamma_sqrt = gamma.sqrt();
        Self { gamma, gamma_sqrt }
    }

    pub fn dim(&self) -> usize {
        self.gamma.dim()
    }

    pub fn gamma(&self) -> &SpdMatrix {
        &self.gamma
    }

    pub fn gamma_sqrt(&self) -> &SpdMatrix {
        &self.gamma_sqrt
    }
}

/// Filter state after the step-`k` update.
#[derive(Debug, Clone)]
pub struct FilterState {
    pub posterior: GaussianBelief,
    pub step: usize,
}

impl FilterState {
    /// State at `k = 0`: the initial belief.
    pub fn initial(sys: &LtiSystem) -> Self {
        Self {
            posterior: sys.x0().clone(),
            step: 0,
        }
    }
}

/// Everything the sensor computes when deciding whether to transmit.
#[derive(Debug, Clone)]
pub struct TriggerEvaluation {
    /// Prior belief `(x_{k|k-1}, P_{k|k-1})`.
    pub prior: GaussianBelief,
    /// Kalman gain `K_k`.
    pub gain: DMatrix<f64>,
    /// Innovation `ε_k = z_k - C x_{k|k-1}`.
    pub innovation: DVector<f64>,
    /// Send candidate posterior `(x¹, P¹)`.
    pub p1: GaussianBelief,
    /// No-send candidate posterior `(x⁰, P⁰)`; its mean equals the prior mean.
    pub p0: GaussianBelief,
    /// Covariance part of the squared trigger distance, `ϱ_k ≥ 0`.
    pub rho: f64,
    /// `exp{-½(‖ε‖²_{KᵀΓK} + ϱ)}`.
    pub no_send_probability: f64,
    /// Transmission decision `ς_k` (`true` = send).
    pub send: bool,
    /// The uniform draw `ϑ_k` the score was compared against.
    pub threshold_draw: f64,
}

/// Time update: mean `A x`, covariance `A P Aᵀ + Q` (symmetrized).
pub fn predict(state: &FilterState, sys: &LtiSystem) -> GaussianBelief {
    let mean = sys.a() * state.posterior.mean();
    let cov = sys.a() * state.posterior.cov_matrix() * sys.a().transpose() + sys.q();
    GaussianBelief::from_moments(mean, cov)
}

/// `K = P Cᵀ (C P Cᵀ + R)⁻¹`, the inner matrix factorized by Cholesky.
pub fn kalman_gain(prior: &GaussianBelief, sys: &LtiSystem) -> Result<DMatrix<f64>, FilterError> {
    let s_z = symmetrize(&(sys.c() * prior.cov_matrix() * sys.c().transpose() + sys.r()));
    let chol = Cholesky::new(s_z).ok_or(FilterError::InnovationCovNotPD)?;
    Ok(chol.solve(&(sys.c() * prior.cov_matrix())).transpose())
}

/// The measurement-independent pieces of a trigger evaluation. These depend
/// only on the prior covariance, so the remote side can reproduce them
/// without seeing `z_k`.
pub(crate) struct TriggerMoments {
    pub gain: DMatrix<f64>,
    /// `C P Cᵀ + R`.
    pub innovation_cov: DMatrix<f64>,
    /// `KᵀΓK`.
    pub gram: DMatrix<f64>,
    pub p1: DMatrix<f64>,
    pub p0: DMatrix<f64>,
    pub rho: f64,
}

pub(crate) fn trigger_moments(
    prior_cov: &DMatrix<f64>,
    sys: &LtiSystem,
    cfg: &TriggerConfig,
) -> Result<TriggerMoments, FilterError> {
    let n = sys.state_dim();
    let s_z = symmetrize(&(sys.c() * prior_cov * sys.c().transpose() + sys.r()));
    let chol = Cholesky::new(s_z.clone()).ok_or(FilterError::InnovationCovNotPD)?;
    let gain = chol.solve(&(sys.c() * prior_cov)).transpose();
    let p1 = symmetrize(&((DMatrix::identity(n, n) - &gain * sys.c()) * prior_cov));
    let gram = symmetrize(&(gain.transpose() * cfg.gamma().as_matrix() * &gain));
    let s_z_inv = chol.inverse();
    let correction_inner = Cholesky::new(symmetrize(&(&gram + s_z_inv)))
        .ok_or(MatrixError::CholeskyFailure)?
        .inverse();
    let p0 = symmetrize(&(&p1 + &gain * correction_inner * gain.transpose()));
    let rho = w2_trace_term(
        &p0,
        &p1,
        cfg.gamma().as_matrix(),
        cfg.gamma_sqrt().as_matrix(),
    )
    .max(0.0);
    Ok(TriggerMoments {
        gain,
        innovation_cov: s_z,
        gram,
        p1,
        p0,
        rho,
    })
}

/// Runs the stochastic trigger for one measurement: computes both candidate
/// posteriors, the no-send probability, and the decision against `theta`.
/// No-send wins ties (`score ≥ ϑ` keeps the measurement local).
pub fn evaluate_trigger(
    prior: &GaussianBelief,
    z: &DVector<f64>,
    sys: &LtiSystem,
    cfg: &TriggerConfig,
    theta: f64,
) -> Result<TriggerEvaluation, FilterError> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(FilterError::ThresholdOutOfRange { value: theta });
    }
    if z.len() != sys.measurement_dim() {
        return Err(MatrixError::DimensionMismatch {
            expected: sys.measurement_dim(),
            found: z.len(),
        }
        .into());
    }
    let tm = trigger_moments(prior.cov_matrix(), sys, cfg)?;
    let innovation = z - sys.c() * prior.mean();
    let exponent = (&tm.gram * &innovation).dot(&innovation) + tm.rho;
    let no_send_probability = (-0.5 * exponent).exp();
    let send = no_send_probability < theta;
    let p1_mean = prior.mean() + &tm.gain * &innovation;
    Ok(TriggerEvaluation {
        prior: prior.clone(),
        gain: tm.gain,
        innovation,
        p1: GaussianBelief::from_moments(p1_mean, tm.p1),
        p0: GaussianBelief::from_moments(prior.mean().clone(), tm.p0),
        rho: tm.rho,
        no_send_probability,
        send,
        threshold_draw: theta,
    })
}

/// Measurement update on the estimator side. A measurement must be supplied
/// exactly when the evaluation decided to send; the posterior is then the
/// standard update, otherwise the prior mean with the no-send covariance.
pub fn update(
    prior: &GaussianBelief,
    eval: &TriggerEvaluation,
    z_if_sent: Option<&DVector<f64>>,
    sys: &LtiSystem,
    step: usize,
) -> Result<FilterState, FilterError> {
    let posterior = match (eval.send, z_if_sent) {
        (true, Some(z)) => {
            let innovation = z - sys.c() * prior.mean();
            GaussianBelief::from_moments(
                prior.mean() + &eval.gain * innovation,
                eval.p1.cov_matrix().clone(),
            )
        }
        (false, None) => {
            GaussianBelief::from_moments(prior.mean().clone(), eval.p0.cov_matrix().clone())
        }
        (true, None) => return Err(FilterError::MissingMeasurement),
        (false, Some(_)) => return Err(FilterError::UnexpectedMeasurement),
    };
    Ok(FilterState { posterior, step })
}
