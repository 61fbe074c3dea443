//! LTI system definition, ground-truth trajectory simulation, and the two
//! built-in scenarios (target tracking and a two-mass spring chain).

use std::fmt;
use std::str::FromStr;

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::matgauss::{
    covariance_factor, sample_gaussian, standard_normal_vector, symmetrize, GaussianBelief,
    MatrixError, PsdMatrix, SpdMatrix,
};
use crate::pset::TriggerConfig;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("scale must be strictly positive, got {value}")]
    NonPositiveScale { value: f64 },
    #[error("inconsistent dimensions: {0}")]
    InconsistentDimensions(String),
    #[error("simulation horizon must be at least 1")]
    EmptyHorizon,
    #[error("unknown scenario '{0}' (expected 'target_tracking' or 'spring_mass')")]
    UnknownScenario(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Discrete-time LTI system `x_k = A x_{k-1} + w_{k-1}`, `z_k = C x_k + v_k`
/// with `w ~ N(0, Q)`, `v ~ N(0, R)` and Gaussian initial state.
#[derive(Debug, Clone)]
pub struct LtiSystem {
    a: DMatrix<f64>,
    c: DMatrix<f64>,
    q: PsdMatrix,
    r: PsdMatrix,
    x0: GaussianBelief,
    detectable: bool,
}

impl LtiSystem {
    /// Standard constructor: `Q`, `R` and the initial covariance must be
    /// strictly positive definite. Detectability of `(C, A)` is checked by
    /// the PBH test; a failure is logged as a warning, not an error.
    pub fn new(
        a: DMatrix<f64>,
        c: DMatrix<f64>,
        q: SpdMatrix,
        r: SpdMatrix,
        x0: GaussianBelief,
    ) -> Result<Self, ModelError> {
        if !x0.cov().is_strictly_pd() {
            return Err(MatrixError::NotPositiveDefinite {
                min_eigenvalue: x0.cov().min_eigenvalue(),
            }
            .into());
        }
        Self::assemble(a, c, q.into(), r.into(), x0)
    }

    /// Relaxed constructor allowing semidefinite (even zero) noise
    /// covariances, for deterministic and degenerate configurations.
    pub fn new_relaxed(
        a: DMatrix<f64>,
        c: DMatrix<f64>,
        q: PsdMatrix,
        r: PsdMatrix,
        x0: GaussianBelief,
    ) -> Result<Self, ModelError> {
        Self::assemble(a, c, q, r, x0)
    }

    fn assemble(
        a: DMatrix<f64>,
        c: DMatrix<f64>,
        q: PsdMatrix,
        r: PsdMatrix,
        x0: GaussianBelief,
    ) -> Result<Self, ModelError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(ModelError::InconsistentDimensions(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if c.ncols() != n {
            return Err(ModelError::InconsistentDimensions(format!(
                "C has {} columns, state dimension is {n}",
                c.ncols()
            )));
        }
        let m = c.nrows();
        if q.dim() != n {
            return Err(ModelError::InconsistentDimensions(format!(
                "Q is {}x{0}, state dimension is {n}",
                q.dim()
            )));
        }
        if r.dim() != m {
            return Err(ModelError::InconsistentDimensions(format!(
                "R is {}x{0}, measurement dimension is {m}",
                r.dim()
            )));
        }
        if x0.dim() != n {
            return Err(ModelError::InconsistentDimensions(format!(
                "initial belief has dimension {}, state dimension is {n}",
                x0.dim()
            )));
        }
        let detectable = pbh_detectable(&a, &c);
        if !detectable {
            log::warn!("(C, A) fails the PBH detectability test; estimates may diverge");
        }
        Ok(Self {
            a,
            c,
            q,
            r,
            x0,
            detectable,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn measurement_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn q(&self) -> &DMatrix<f64> {
        self.q.as_matrix()
    }

    pub fn r(&self) -> &DMatrix<f64> {
        self.r.as_matrix()
    }

    pub fn x0(&self) -> &GaussianBelief {
        &self.x0
    }

    pub fn is_detectable(&self) -> bool {
        self.detectable
    }

    pub fn c_full_row_rank(&self) -> bool {
        let m = self.measurement_dim();
        if m > self.state_dim() {
            return false;
        }
        let sv = self.c.clone().singular_values();
        let smax = sv.max();
        smax > 0.0 && sv.min() > smax * 1e-10
    }
}

/// PBH detectability: for every eigenvalue of `A` on or outside the unit
/// circle, `[λI - A; C]` must have full column rank.
fn pbh_detectable(a: &DMatrix<f64>, c: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    let m = c.nrows();
    let eigs = a.clone().complex_eigenvalues();
    for lam in eigs.iter() {
        if lam.norm() < 1.0 - 1e-9 {
            continue;
        }
        let mut stacked = DMatrix::<Complex<f64>>::zeros(n + m, n);
        for i in 0..n {
            for j in 0..n {
                stacked[(i, j)] = Complex::new(-a[(i, j)], 0.0);
            }
            stacked[(i, i)] += lam;
        }
        for i in 0..m {
            for j in 0..n {
                stacked[(n + i, j)] = Complex::new(c[(i, j)], 0.0);
            }
        }
        let sv = stacked.singular_values();
        let smax = sv.max();
        let tol = smax * (n + m) as f64 * 1e-12;
        let rank = sv.iter().filter(|&&s| s > tol).count();
        if rank < n {
            return false;
        }
    }
    true
}

/// A realized state/measurement path of horizon `K`; `states[k-1]` is `x_k`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    states: Vec<DVector<f64>>,
    measurements: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn measurements(&self) -> &[DVector<f64>] {
        &self.measurements
    }
}

/// Simulates `x_0 ~ x0`, `x_k = A x_{k-1} + w_{k-1}`, `z_k = C x_k + v_k`.
/// Deterministic given the RNG state. The initial draw `x_0` is consumed but
/// not recorded; the trajectory holds `x_1..x_K`.
pub fn simulate<R: Rng + ?Sized>(
    sys: &LtiSystem,
    horizon: usize,
    rng: &mut R,
) -> Result<Trajectory, ModelError> {
    if horizon == 0 {
        return Err(ModelError::EmptyHorizon);
    }
    let n = sys.state_dim();
    let m = sys.measurement_dim();
    let fq = covariance_factor(sys.q())?;
    let fr = covariance_factor(sys.r())?;
    let mut x = sample_gaussian(sys.x0(), rng)?;
    let mut states = Vec::with_capacity(horizon);
    let mut measurements = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        x = sys.a() * &x + &fq * standard_normal_vector(n, rng);
        let z = sys.c() * &x + &fr * standard_normal_vector(m, rng);
        states.push(x.clone());
        measurements.push(z);
    }
    Ok(Trajectory {
        states,
        measurements,
    })
}

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

/// The two built-in simulation scenarios, selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    TargetTracking,
    SpringMass,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::TargetTracking => "target_tracking",
            Scenario::SpringMass => "spring_mass",
        }
    }

    pub fn build(self, scale: f64) -> Result<(LtiSystem, TriggerConfig), ModelError> {
        match self {
            Scenario::TargetTracking => target_tracking_scenario(scale),
            Scenario::SpringMass => spring_mass_scenario(scale),
        }
    }

    /// Trigger-weight scales that target empirical communication rates
    /// 0.1..0.9 for this scenario.
    pub fn table_scales(self) -> [f64; 9] {
        match self {
            Scenario::TargetTracking => [0.06, 0.62, 2.3, 5.9, 12.0, 24.0, 45.0, 88.0, 220.0],
            Scenario::SpringMass => [
                720.0, 3.0e3, 7.0e3, 14.5e3, 25.0e3, 42.0e3, 69.0e3, 130.0e3, 300.0e3,
            ],
        }
    }

    /// Communication rates targeted by [`Scenario::table_scales`].
    pub const TABLE_RATES: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
}

impl FromStr for Scenario {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "target_tracking" => Ok(Scenario::TargetTracking),
            "spring_mass" => Ok(Scenario::SpringMass),
            other => Err(ModelError::UnknownScenario(other.to_string())),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Constant-acceleration target tracker sampled at `T = 0.25 s`: position and
/// acceleration are measured, the trigger weight is `scale * diag(4, 1, 1)`.
pub fn target_tracking_scenario(scale: f64) -> Result<(LtiSystem, TriggerConfig), ModelError> {
    if scale <= 0.0 {
        return Err(ModelError::NonPositiveScale { value: scale });
    }
    const T: f64 = 0.25;
    const MANEUVER: f64 = 5.0;
    const SIGMA_M: f64 = 0.1;
    const SIGMA_P: f64 = 1.0;
    const SIGMA_A: f64 = 0.1;

    let a = DMatrix::from_row_slice(3, 3, &[1.0, T, T * T, 0.0, 1.0, T, 0.0, 0.0, 1.0]);
    let c = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    let q_scale = 2.0 * MANEUVER * SIGMA_M * SIGMA_M;
    let q = SpdMatrix::new(
        q_scale
            * DMatrix::from_row_slice(
                3,
                3,
                &[
                    T.powi(5) / 20.0,
                    T.powi(4) / 8.0,
                    T.powi(3) / 6.0,
                    T.powi(4) / 8.0,
                    T.powi(3) / 3.0,
                    T.powi(2) / 2.0,
                    T.powi(3) / 6.0,
                    T.powi(2) / 2.0,
                    T,
                ],
            ),
    )?;
    let r = SpdMatrix::from_diagonal(&[SIGMA_P * SIGMA_P, SIGMA_A * SIGMA_A])?;
    let x0 = GaussianBelief::from_spd(DVector::zeros(3), SpdMatrix::identity(3))?;
    let sys = LtiSystem::new(a, c, q, r, x0)?;
    let gamma = SpdMatrix::from_diagonal(&[4.0, 1.0, 1.0])?.scaled(scale)?;
    Ok((sys, TriggerConfig::new(gamma)))
}

/// Two coupled masses on springs, continuous dynamics discretized by exact
/// zero-order hold at `Δt = 0.02 s` (Van Loan for the noise). Positions are
/// measured (the second with weight 0.5); the trigger weight is `scale * I`.
pub fn spring_mass_scenario(scale: f64) -> Result<(LtiSystem, TriggerConfig), ModelError> {
    if scale <= 0.0 {
        return Err(ModelError::NonPositiveScale { value: scale });
    }
    const M1: f64 = 3.0;
    const M2: f64 = 5.0;
    const K1: f64 = 15.0;
    const K2: f64 = 5.0;
    const SIGMA_1: f64 = 1.0;
    const SIGMA_2: f64 = 1.0;
    const SIGMA_3: f64 = 0.5;
    const SIGMA_4: f64 = 0.1;
    const DT: f64 = 0.02;

    // State [x1, x2, x1', x2']; forces w_i act through the accelerations.
    let a_c = DMatrix::from_row_slice(
        4,
        4,
        &[
            0.0,
            0.0,
            1.0,
            0.0,
            0.0,
            0.0,
            0.0,
            1.0,
            -K1 / M1,
            K1 / M1,
            0.0,
            0.0,
            K1 / M2,
            -(K1 + K2) / M2,
            0.0,
            0.0,
        ],
    );
    let q_c = DMatrix::from_diagonal(&DVector::from_row_slice(&[
        0.0,
        0.0,
        (SIGMA_1 / M1).powi(2),
        (SIGMA_2 / M2).powi(2),
    ]));
    let (a_d, q_d) = van_loan_discretize(&a_c, &q_c, DT);
    let c = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0]);
    let q = SpdMatrix::new(q_d)?;
    let r = SpdMatrix::from_diagonal(&[SIGMA_3 * SIGMA_3, SIGMA_4 * SIGMA_4])?;
    let x0 = GaussianBelief::from_spd(DVector::zeros(4), SpdMatrix::identity(4))?;
    let sys = LtiSystem::new(a_d, c, q, r, x0)?;
    let gamma = SpdMatrix::identity(4).scaled(scale)?;
    Ok((sys, TriggerConfig::new(gamma)))
}

/// Matrix exponential by scaling-and-squaring over an order-12 Taylor
/// polynomial. Adequate for the small, well-conditioned generators used here.
pub(crate) fn matrix_exponential(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = m.norm();
    let squarings = if norm > 0.5 {
        ((norm / 0.5).log2().ceil() as i32).max(0)
    } else {
        0
    };
    let scaled = m / 2f64.powi(squarings);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for i in 1..=12 {
        term = (&term * &scaled) / i as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Exact zero-order-hold discretization of `(A_c, Q_c)` over `dt` via the
/// augmented-matrix exponential of `[[-A_c, Q_c], [0, A_cᵀ]] dt`.
pub(crate) fn van_loan_discretize(
    a_c: &DMatrix<f64>,
    q_c: &DMatrix<f64>,
    dt: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a_c.nrows();
    let mut aug = DMatrix::zeros(2 * n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(&(-a_c));
    aug.view_mut((0, n), (n, n)).copy_from(q_c);
    aug.view_mut((n, n), (n, n)).copy_from(&a_c.transpose());
    let e = matrix_exponential(&(aug * dt));
    let f12 = e.view((0, n), (n, n)).into_owned();
    let f22 = e.view((n, n), (n, n)).into_owned();
    let a_d = f22.transpose();
    let q_d = symmetrize(&(&a_d * f12));
    (a_d, q_d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_system(a: f64, c: f64, q: f64, r: f64, p0: f64) -> LtiSystem {
        LtiSystem::new_relaxed(
            DMatrix::from_row_slice(1, 1, &[a]),
            DMatrix::from_row_slice(1, 1, &[c]),
            PsdMatrix::new(DMatrix::from_row_slice(1, 1, &[q])).unwrap(),
            PsdMatrix::new(DMatrix::from_row_slice(1, 1, &[r])).unwrap(),
            GaussianBelief::new(
                DVector::zeros(1),
                PsdMatrix::new(DMatrix::from_row_slice(1, 1, &[p0])).unwrap(),
            )
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn noise_free_simulation_is_the_deterministic_recursion() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let x0 = GaussianBelief::new(DVector::from_row_slice(&[1.0, -0.5]), PsdMatrix::zeros(2))
            .unwrap();
        let sys = LtiSystem::new_relaxed(
            a.clone(),
            c,
            PsdMatrix::zeros(2),
            PsdMatrix::zeros(1),
            x0.clone(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let traj = simulate(&sys, 5, &mut rng).unwrap();
        let mut expected = x0.mean().clone();
        for k in 0..5 {
            expected = &a * expected;
            assert_relative_eq!(&traj.states()[k], &expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn random_walk_increment_variance_matches_q() {
        let sys = scalar_system(1.0, 1.0, 1.0, 1e-12, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let traj = simulate(&sys, 100_000, &mut rng).unwrap();
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for k in 1..traj.horizon() {
            let d = traj.states()[k][0] - traj.states()[k - 1][0];
            sum += d;
            sum_sq += d * d;
        }
        let n = (traj.horizon() - 1) as f64;
        let var = sum_sq / n - (sum / n).powi(2);
        assert!((var - 1.0).abs() < 0.02, "increment variance {var}");
    }

    #[test]
    fn simulation_is_deterministic_for_fixed_seed() {
        let (sys, _) = target_tracking_scenario(1.0).unwrap();
        let mut rng_a = ChaCha8Rng::seed_from_u64(3);
        let mut rng_b = ChaCha8Rng::seed_from_u64(3);
        let ta = simulate(&sys, 50, &mut rng_a).unwrap();
        let tb = simulate(&sys, 50, &mut rng_b).unwrap();
        assert_eq!(ta.states(), tb.states());
        assert_eq!(ta.measurements(), tb.measurements());
    }

    #[test]
    fn zero_horizon_is_rejected() {
        let sys = scalar_system(1.0, 1.0, 1.0, 1.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            simulate(&sys, 0, &mut rng),
            Err(ModelError::EmptyHorizon)
        ));
    }

    #[test]
    fn model_residual_covariances_match_q_and_r() {
        let (sys, _) = target_tracking_scenario(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let traj = simulate(&sys, 100_000, &mut rng).unwrap();
        let n = sys.state_dim();
        let m = sys.measurement_dim();
        let mut q_acc = DMatrix::zeros(n, n);
        let mut r_acc = DMatrix::zeros(m, m);
        let mut count = 0.0;
        for k in 1..traj.horizon() {
            let w = &traj.states()[k] - sys.a() * &traj.states()[k - 1];
            q_acc += &w * w.transpose();
            let v = &traj.measurements()[k] - sys.c() * &traj.states()[k];
            r_acc += &v * v.transpose();
            count += 1.0;
        }
        q_acc /= count;
        r_acc /= count;
        let q_rel = (&q_acc - sys.q()).norm() / sys.q().norm();
        let r_rel = (&r_acc - sys.r()).norm() / sys.r().norm();
        assert!(q_rel < 0.03, "Q residual relative error {q_rel}");
        assert!(r_rel < 0.03, "R residual relative error {r_rel}");
    }

    #[test]
    fn target_tracking_matrices_match_hand_evaluation() {
        let (sys, trigger) = target_tracking_scenario(12.0).unwrap();
        let t: f64 = 0.25;
        assert_relative_eq!(sys.a()[(0, 1)], t, epsilon = 1e-15);
        assert_relative_eq!(sys.a()[(0, 2)], t * t, epsilon = 1e-15);
        // Q entries are the stated polynomial in T scaled by 2 * 5 * 0.1^2.
        assert_relative_eq!(sys.q()[(0, 0)], 0.1 * t.powi(5) / 20.0, epsilon = 1e-18);
        assert_relative_eq!(sys.q()[(1, 2)], 0.1 * t.powi(2) / 2.0, epsilon = 1e-18);
        assert_relative_eq!(sys.q()[(2, 2)], 0.1 * t, epsilon = 1e-18);
        assert_relative_eq!(sys.r()[(0, 0)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(sys.r()[(1, 1)], 0.01, epsilon = 1e-15);
        // Table entry for a 0.5 communication rate.
        assert_relative_eq!(trigger.gamma().as_matrix()[(0, 0)], 48.0, epsilon = 1e-12);
        assert_relative_eq!(trigger.gamma().as_matrix()[(1, 1)], 12.0, epsilon = 1e-12);
        assert!(sys.is_detectable());
        assert!(sys.c_full_row_rank());
    }

    #[test]
    fn target_tracking_unit_scale_gamma() {
        let (_, trigger) = target_tracking_scenario(1.0).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_row_slice(&[4.0, 1.0, 1.0]));
        assert_relative_eq!(trigger.gamma().as_matrix(), &expected, epsilon = 1e-15);
    }

    #[test]
    fn nonpositive_scale_is_rejected() {
        assert!(matches!(
            target_tracking_scenario(0.0),
            Err(ModelError::NonPositiveScale { .. })
        ));
        assert!(matches!(
            spring_mass_scenario(-3.0),
            Err(ModelError::NonPositiveScale { .. })
        ));
    }

    #[test]
    fn spring_mass_unit_scale_gamma_is_identity() {
        let (_, trigger) = spring_mass_scenario(1.0).unwrap();
        assert_relative_eq!(
            trigger.gamma().as_matrix(),
            &DMatrix::identity(4, 4),
            epsilon = 1e-15
        );
    }

    /// Independent oracle: a plain 20-term Taylor series of A_c dt, accurate
    /// far past 1e-9 for this generator size.
    #[test]
    fn spring_mass_transition_matches_taylor_series() {
        let (sys, _) = spring_mass_scenario(1.0).unwrap();
        let a_c = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, //
                -5.0, 5.0, 0.0, 0.0, //
                3.0, -4.0, 0.0, 0.0,
            ],
        );
        let x = a_c * 0.02;
        let mut term = DMatrix::identity(4, 4);
        let mut taylor = DMatrix::identity(4, 4);
        for i in 1..=20 {
            term = (&term * &x) / i as f64;
            taylor += &term;
        }
        let rel = (sys.a() - &taylor).norm() / taylor.norm();
        assert!(rel <= 1e-9, "relative error {rel}");
    }

    #[test]
    fn spring_mass_process_noise_is_spd() {
        let (sys, _) = spring_mass_scenario(1.0).unwrap();
        let min = PsdMatrix::new(sys.q().clone()).unwrap().min_eigenvalue();
        assert!(min > 0.0, "min eigenvalue {min}");
        assert!(sys.is_detectable());
        assert!(sys.c_full_row_rank());
    }

    #[test]
    fn scenario_names_round_trip() {
        assert_eq!(
            "target_tracking".parse::<Scenario>().unwrap(),
            Scenario::TargetTracking
        );
        assert_eq!(
            "spring_mass".parse::<Scenario>().unwrap(),
            Scenario::SpringMass
        );
        assert!("bogus".parse::<Scenario>().is_err());
    }

    #[test]
    fn undetectable_pair_is_flagged() {
        // Unstable mode unobserved: A = diag(2, 0.5), C sees only the stable one.
        let sys = LtiSystem::new_relaxed(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]),
            DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            PsdMatrix::new(DMatrix::identity(2, 2)).unwrap(),
            PsdMatrix::new(DMatrix::identity(1, 1)).unwrap(),
            GaussianBelief::new(
                DVector::zeros(2),
                PsdMatrix::new(DMatrix::identity(2, 2)).unwrap(),
            )
            .unwrap(),
        )
        .unwrap();
        assert!(!sys.is_detectable());
    }
}
