//! Estimator strategies behind a common trait, registered by name.
//!
//! Three built-ins:
//!
//! - `"pset"`: the posterior-divergence triggered filter ([`PsetKf`]);
//! - `"kf"`: the always-transmit standard Kalman filter ([`StandardKf`]);
//! - `"random"`: a rate-matched control that transmits i.i.d.
//!   Bernoulli(`send_prob`) and runs open loop otherwise ([`RandomKf`]).
//!
//! The registry resolves config/CLI names to boxed strategies; additional
//! variants can be registered at runtime.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::distr::{Distribution, StandardUniform};
use rand::RngCore;

use crate::matgauss::{symmetrize, GaussianBelief};
use crate::model::{LtiSystem, Trajectory};
use crate::pset::{evaluate_trigger, predict, update, FilterError, FilterState, TriggerConfig};

/// Everything recorded about one filter step.
#[derive(Debug, Clone)]
pub struct StepRecord {
    /// Step index `k`, starting at 1.
    pub step: usize,
    /// Transmission decision `ς_k`.
    pub sent: bool,
    /// Innovation `ε_k = z_k - C x_{k|k-1}`.
    pub innovation: DVector<f64>,
    /// Covariance part of the trigger exponent (zero for the baselines).
    pub rho: f64,
    /// Probability of withholding the measurement at this step.
    pub no_send_probability: f64,
    /// Posterior belief after the update.
    pub posterior: GaussianBelief,
    /// Simulated true state `x_k`.
    pub true_state: DVector<f64>,
    /// `‖x_k - x̂_{k|k}‖²`.
    pub squared_error: f64,
}

/// A complete sensor-to-estimator strategy run over one trajectory.
pub trait Estimator: Send + Sync {
    fn name(&self) -> &'static str;

    /// Runs the strategy over the whole trajectory. `rng` supplies the
    /// strategy's own decision draws only; trajectory noise is already
    /// realized in `traj`.
    fn run(
        &self,
        sys: &LtiSystem,
        traj: &Trajectory,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<StepRecord>, FilterError>;
}

/// The posterior-divergence triggered filter. The sensor and the remote
/// estimator mirror the same deterministic recursion, so a single loop plays
/// both roles.
pub struct PsetKf {
    trigger: TriggerConfig,
}

impl PsetKf {
    pub fn new(trigger: TriggerConfig) -> Self {
        Self { trigger }
    }
}

impl Estimator for PsetKf {
    fn name(&self) -> &'static str {
        "pset"
    }

    fn run(
        &self,
        sys: &LtiSystem,
        traj: &Trajectory,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<StepRecord>, FilterError> {
        let mut state = FilterState::initial(sys);
        let mut records = Vec::with_capacity(traj.horizon());
        for k in 1..=traj.horizon() {
            let prior = predict(&state, sys);
            let z = &traj.measurements()[k - 1];
            let theta: f64 = StandardUniform.sample(rng);
            let eval = evaluate_trigger(&prior, z, sys, &self.trigger, theta)?;
            state = update(&prior, &eval, eval.send.then_some(z), sys, k)?;
            let truth = &traj.states()[k - 1];
            let squared_error = (truth - state.posterior.mean()).norm_squared();
            records.push(StepRecord {
                step: k,
                sent: eval.send,
                innovation: eval.innovation,
                rho: eval.rho,
                no_send_probability: eval.no_send_probability,
                posterior: state.posterior.clone(),
                true_state: truth.clone(),
                squared_error,
            });
        }
        Ok(records)
    }
}

/// Standard Kalman filter: every measurement is transmitted.
pub struct StandardKf;

impl Estimator for StandardKf {
    fn name(&self) -> &'static str {
        "kf"
    }

    fn run(
        &self,
        sys: &LtiSystem,
        traj: &Trajectory,
        _rng: &mut dyn RngCore,
    ) -> Result<Vec<StepRecord>, FilterError> {
        let mut state = FilterState::initial(sys);
        let mut records = Vec::with_capacity(traj.horizon());
        for k in 1..=traj.horizon() {
            let prior = predict(&state, sys);
            let z = &traj.measurements()[k - 1];
            let (mean, cov, innovation) = standard_update(&prior, z, sys)?;
            state = FilterState {
                posterior: GaussianBelief::from_moments(mean, cov),
                step: k,
            };
            let truth = &traj.states()[k - 1];
            let squared_error = (truth - state.posterior.mean()).norm_squared();
            records.push(StepRecord {
                step: k,
                sent: true,
                innovation,
                rho: 0.0,
                no_send_probability: 0.0,
                posterior: state.posterior.clone(),
                true_state: truth.clone(),
                squared_error,
            });
        }
        Ok(records)
    }
}

/// Rate-matched control: transmits i.i.d. Bernoulli(`send_prob`). A skipped
/// measurement carries no information, so the filter coasts on the pure time
/// update.
pub struct RandomKf {
    send_prob: f64,
}

impl RandomKf {
    pub fn new(send_prob: f64) -> Result<Self, FilterError> {
        if !(0.0..=1.0).contains(&send_prob) {
            return Err(FilterError::InvalidSendProbability { value: send_prob });
        }
        Ok(Self { send_prob })
    }
}

impl Estimator for RandomKf {
    fn name(&self) -> &'static str {
        "random"
    }

    fn run(
        &self,
        sys: &LtiSystem,
        traj: &Trajectory,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<StepRecord>, FilterError> {
        let mut state = FilterState::initial(sys);
        let mut records = Vec::with_capacity(traj.horizon());
        for k in 1..=traj.horizon() {
            let prior = predict(&state, sys);
            let z = &traj.measurements()[k - 1];
            let draw: f64 = StandardUniform.sample(rng);
            let sent = draw < self.send_prob;
            let innovation = z - sys.c() * prior.mean();
            state = if sent {
                let (mean, cov, _) = standard_update(&prior, z, sys)?;
                FilterState {
                    posterior: GaussianBelief::from_moments(mean, cov),
                    step: k,
                }
            } else {
                FilterState {
                    posterior: prior.clone(),
                    step: k,
                }
            };
            let truth = &traj.states()[k - 1];
            let squared_error = (truth - state.posterior.mean()).norm_squared();
            records.push(StepRecord {
                step: k,
                sent,
                innovation,
                rho: 0.0,
                no_send_probability: 1.0 - self.send_prob,
                posterior: state.posterior.clone(),
                true_state: truth.clone(),
                squared_error,
            });
        }
        Ok(records)
    }
}

/// (posterior mean, posterior covariance, innovation).
type StandardUpdate = (DVector<f64>, DMatrix<f64>, DVector<f64>);

fn standard_update(
    prior: &GaussianBelief,
    z: &DVector<f64>,
    sys: &LtiSystem,
) -> Result<StandardUpdate, FilterError> {
    let n = sys.state_dim();
    let s_z = symmetrize(&(sys.c() * prior.cov_matrix() * sys.c().transpose() + sys.r()));
    let chol = Cholesky::new(s_z).ok_or(FilterError::InnovationCovNotPD)?;
    let gain = chol.solve(&(sys.c() * prior.cov_matrix())).transpose();
    let innovation = z - sys.c() * prior.mean();
    let mean = prior.mean() + &gain * &innovation;
    let cov = symmetrize(&((DMatrix::identity(n, n) - &gain * sys.c()) * prior.cov_matrix()));
    Ok((mean, cov, innovation))
}

/// Inputs a factory needs to instantiate a strategy.
#[derive(Debug, Clone)]
pub struct EstimatorContext {
    /// Trigger weight for the triggered filter.
    pub trigger: TriggerConfig,
    /// Transmission probability for the random baseline.
    pub send_prob: f64,
}

pub type EstimatorFactory = fn(&EstimatorContext) -> Result<Box<dyn Estimator>, FilterError>;

/// Name-to-factory registry for estimator strategies.
pub struct EstimatorRegistry {
    entries: Vec<(String, EstimatorFactory)>,
}

impl EstimatorRegistry {
    /// Registry with the three built-in strategies.
    pub fn builtin() -> Self {
        let mut registry = Self {
            entries: Vec::new(),
        };
        registry.register("pset", |ctx| {
            Ok(Box::new(PsetKf::new(ctx.trigger.clone())) as Box<dyn Estimator>)
        });
        registry.register("kf", |_| Ok(Box::new(StandardKf) as Box<dyn Estimator>));
        registry.register("random", |ctx| {
            Ok(Box::new(RandomKf::new(ctx.send_prob)?) as Box<dyn Estimator>)
        });
        registry
    }

    /// Registers (or replaces) a named factory.
    pub fn register(&mut self, name: impl Into<String>, factory: EstimatorFactory) {
        let name = name.into();
        if let Some(slot) = self.entries.iter_mut().find(|(n, _)| *n == name) {
            slot.1 = factory;
        } else {
            self.entries.push((name, factory));
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|(n, _)| n == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn create(
        &self,
        name: &str,
        ctx: &EstimatorContext,
    ) -> Result<Box<dyn Estimator>, FilterError> {
        let factory = self
            .entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, f)| f)
            .ok_or_else(|| FilterError::UnknownEstimator(name.to_string()))?;
        factory(ctx)
    }
}
