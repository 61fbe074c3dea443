//! Remote state estimation with a posterior-divergence stochastic
//! event-triggered schedule.
//!
//! A sensor observes a linear system and decides at every step whether to
//! transmit its measurement to a remote estimator. The transmission test
//! compares the divergence between the two candidate posteriors (measurement
//! received vs. withheld) against a uniform random threshold, which keeps the
//! conditional state distribution Gaussian and admits an exact recursive MMSE
//! filter.
//!
//! The crate is organized as:
//!
//! - [`matgauss`]: SPD/PSD matrix types, Gaussian beliefs, and the weighted
//!   2-Wasserstein metric between Gaussians.
//! - [`model`]: LTI system definition, trajectory simulation, and the two
//!   built-in scenarios (`target_tracking`, `spring_mass`).
//! - [`pset`]: the trigger evaluation and the coupled scheduler/estimator
//!   recursion.
//! - [`estimator`]: the estimator strategies (`pset`, `kf`, `random`) behind
//!   a common trait, selectable by name through a registry.
//! - [`analysis`]: Riccati bound sequences, fixed points, transmission
//!   probability, communication-rate bounds, and the trigger-exponent ratio
//!   study.
//! - [`harness`]: reproducible Monte Carlo experiments, metrics, the
//!   grid-quadrature posterior oracle, and randomized identity batteries.

pub mod analysis;
pub mod estimator;
pub mod harness;
pub mod matgauss;
pub mod model;
pub mod pset;
pub mod stream;

pub use estimator::{Estimator, EstimatorContext, EstimatorRegistry, StepRecord};
pub use matgauss::{GaussianBelief, MatrixError, PsdMatrix, SpdMatrix};
pub use model::{LtiSystem, ModelError, Scenario, Trajectory};
pub use pset::{FilterError, FilterState, TriggerConfig, TriggerEvaluation};
