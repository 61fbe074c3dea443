//! SPD/PSD matrix types, Gaussian beliefs, and the weighted 2-Wasserstein
//! metric between Gaussians.

use nalgebra::{DMatrix, DVector};
use rand::distr::{Distribution, StandardUniform};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Symmetry tolerance, relative to the largest absolute entry.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Absolute eigenvalue tolerance separating definite from indefinite.
pub const PSD_EIGEN_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (relative asymmetry {max_asymmetry:.3e})")]
    NotSymmetric { max_asymmetry: f64 },
    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveSemiDefinite { min_eigenvalue: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("Cholesky factorization failed: covariance is numerically indefinite")]
    CholeskyFailure,
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

fn check_square_symmetric(m: &DMatrix<f64>) -> Result<(), MatrixError> {
    if m.nrows() != m.ncols() {
        return Err(MatrixError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let asym = relative_asymmetry(m);
    if asym > SYMMETRY_TOL {
        return Err(MatrixError::NotSymmetric {
            max_asymmetry: asym,
        });
    }
    Ok(())
}

fn min_symmetric_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    sym.clone().symmetric_eigen().eigenvalues.min()
}

/// Eigenvalue-clamped square root of a symmetric matrix: negative
/// eigenvalues are set to zero before the root is taken.
pub(crate) fn psd_sqrt_clamped(sym: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = sym.clone().symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Symmetric positive definite matrix, validated at construction.
///
/// Holds every strictly positive covariance-valued quantity: process and
/// measurement noise, initial covariance, and the trigger weight.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    entries: DMatrix<f64>,
}

impl SpdMatrix {
    /// Validates symmetry (relative tolerance [`SYMMETRY_TOL`]) and strict
    /// positive definiteness (all eigenvalues above [`PSD_EIGEN_TOL`]).
    pub fn new(entries: DMatrix<f64>) -> Result<Self, MatrixError> {
        check_square_symmetric(&entries)?;
        let sym = symmetrize(&entries);
        let min = min_symmetric_eigenvalue(&sym);
        if min <= PSD_EIGEN_TOL {
            return Err(MatrixError::NotPositiveDefinite {
                min_eigenvalue: min,
            });
        }
        Ok(Self { entries: sym })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: DMatrix::identity(dim, dim),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self, MatrixError> {
        Self::new(DMatrix::from_diagonal(&DVector::from_row_slice(diag)))
    }

    /// Scales by a strictly positive factor.
    pub fn scaled(&self, factor: f64) -> Result<Self, MatrixError> {
        if factor <= 0.0 {
            return Err(MatrixError::NotPositiveDefinite {
                min_eigenvalue: factor * self.min_eigenvalue(),
            });
        }
        Ok(Self {
            entries: factor * &self.entries,
        })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.entries.clone().symmetric_eigen().eigenvalues.min()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.entries.clone().symmetric_eigen().eigenvalues.max()
    }

    /// Unique SPD square root via symmetric eigendecomposition.
    pub fn sqrt(&self) -> SpdMatrix {
        let eig = self.entries.clone().symmetric_eigen();
        let roots = eig.eigenvalues.map(f64::sqrt);
        let root =
            &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
        SpdMatrix {
            entries: symmetrize(&root),
        }
    }
}

/// Positive semidefinite relaxation of [`SpdMatrix`].
///
/// Eigenvalues may reach zero; values down to `-PSD_EIGEN_TOL` are accepted
/// and clamped to zero. Filter covariances live here so that degenerate
/// (noise-free) configurations remain representable.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdMatrix {
    entries: DMatrix<f64>,
}

impl PsdMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self, MatrixError> {
        check_square_symmetric(&entries)?;
        let sym = symmetrize(&entries);
        let eig = sym.clone().symmetric_eigen();
        let min = eig.eigenvalues.min();
        if min < -PSD_EIGEN_TOL {
            return Err(MatrixError::NotPositiveSemiDefinite {
                min_eigenvalue: min,
            });
        }
        let entries = if min < 0.0 {
            let clamped = eig.eigenvalues.map(|l| l.max(0.0));
            symmetrize(
                &(&eig.eigenvectors
                    * DMatrix::from_diagonal(&clamped)
                    * eig.eigenvectors.transpose()),
            )
        } else {
            sym
        };
        Ok(Self { entries })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: DMatrix::zeros(dim, dim),
        }
    }

    /// Trusted constructor for covariances produced by the filter recursions.
    /// Symmetrizes but skips the eigenvalue check.
    pub(crate) fn from_filter_covariance(m: DMatrix<f64>) -> Self {
        Self {
            entries: symmetrize(&m),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_symmetric_eigenvalue(&self.entries)
    }

    pub fn is_strictly_pd(&self) -> bool {
        self.min_eigenvalue() > PSD_EIGEN_TOL
    }

    /// Eigenvalue-clamped square root.
    pub fn sqrt(&self) -> PsdMatrix {
        PsdMatrix {
            entries: symmetrize(&psd_sqrt_clamped(&self.entries)),
        }
    }
}

impl From<SpdMatrix> for PsdMatrix {
    fn from(m: SpdMatrix) -> Self {
        Self { entries: m.entries }
    }
}

/// Gaussian belief: a mean vector paired with a PSD covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    mean: DVector<f64>,
    cov: PsdMatrix,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: PsdMatrix) -> Result<Self, MatrixError> {
        if mean.len() != cov.dim() {
            return Err(MatrixError::DimensionMismatch {
                expected: cov.dim(),
                found: mean.len(),
            });
        }
        Ok(Self { mean, cov })
    }

    pub fn from_spd(mean: DVector<f64>, cov: SpdMatrix) -> Result<Self, MatrixError> {
        Self::new(mean, cov.into())
    }

    /// Trusted constructor for filter outputs; symmetrizes the covariance.
    pub(crate) fn from_moments(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self {
            mean,
            cov: PsdMatrix::from_filter_covariance(cov),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &PsdMatrix {
        &self.cov
    }

    pub fn cov_matrix(&self) -> &DMatrix<f64> {
        self.cov.as_matrix()
    }
}

/// Squared weighted 2-Wasserstein distance between two Gaussian beliefs:
///
/// `‖x̄−ȳ‖²_Γ + Tr(PxΓ + PyΓ − 2(S Px Γ Py S)^{1/2})` with `S = Γ^{1/2}`.
///
/// The inner product `S Px Γ Py S` is similar to an SPD matrix analytically
/// but not numerically symmetric; it is symmetrized and eigenvalue-clamped
/// before the root. The result is clamped to be nonnegative.
pub fn wasserstein_sq(
    x: &GaussianBelief,
    y: &GaussianBelief,
    gamma: &SpdMatrix,
) -> Result<f64, MatrixError> {
    if x.dim() != gamma.dim() {
        return Err(MatrixError::DimensionMismatch {
            expected: gamma.dim(),
            found: x.dim(),
        });
    }
    if y.dim() != gamma.dim() {
        return Err(MatrixError::DimensionMismatch {
            expected: gamma.dim(),
            found: y.dim(),
        });
    }
    let s = gamma.sqrt();
    let dm = x.mean() - y.mean();
    let head = (gamma.as_matrix() * &dm).dot(&dm);
    let tail = w2_trace_term(
        x.cov_matrix(),
        y.cov_matrix(),
        gamma.as_matrix(),
        s.as_matrix(),
    );
    Ok((head + tail).max(0.0))
}

/// The covariance part of the squared weighted 2-Wasserstein distance.
pub(crate) fn w2_trace_term(
    px: &DMatrix<f64>,
    py: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    s: &DMatrix<f64>,
) -> f64 {
    let cross = s * px * gamma * py * s;
    let root = psd_sqrt_clamped(&symmetrize(&cross));
    (px * gamma).trace() + (py * gamma).trace() - 2.0 * root.trace()
}

/// Lower-triangular-like factor `F` with `F Fᵀ = cov`. Cholesky when the
/// covariance is numerically PD, otherwise an eigenvalue-clamped factor for
/// the PSD boundary.
pub(crate) fn covariance_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>, MatrixError> {
    if let Some(chol) = nalgebra::Cholesky::new(cov.clone()) {
        return Ok(chol.l());
    }
    let eig = symmetrize(cov).symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min < -PSD_EIGEN_TOL * cov.amax().max(1.0) {
        return Err(MatrixError::CholeskyFailure);
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

pub(crate) fn standard_normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Draws `mean + F z` with `F Fᵀ = cov` and `z` standard normal.
/// Deterministic for a fixed RNG state.
pub fn sample_gaussian<R: Rng + ?Sized>(
    belief: &GaussianBelief,
    rng: &mut R,
) -> Result<DVector<f64>, MatrixError> {
    let factor = covariance_factor(belief.cov_matrix())?;
    Ok(belief.mean() + factor * standard_normal_vector(belief.dim(), rng))
}

/// Random SPD matrix with eigenvalues drawn uniformly from `[eig_lo, eig_hi]`,
/// conjugated by a random orthogonal matrix. Used by the randomized identity
/// batteries and tests.
pub fn random_spd<R: Rng + ?Sized>(dim: usize, eig_lo: f64, eig_hi: f64, rng: &mut R) -> SpdMatrix {
    assert!(eig_lo > 0.0 && eig_hi >= eig_lo);
    SpdMatrix {
        entries: random_conjugated_diagonal(dim, eig_lo, eig_hi, rng),
    }
}

/// Random PSD matrix with eigenvalues in `[0, eig_hi]`; roughly one in three
/// eigenvalues is forced to exactly zero so rank-deficient cases are covered.
pub fn random_psd<R: Rng + ?Sized>(dim: usize, eig_hi: f64, rng: &mut R) -> PsdMatrix {
    let q = random_orthogonal(dim, rng);
    let eigs = DVector::from_fn(dim, |_, _| {
        let u: f64 = StandardUniform.sample(rng);
        if u < 1.0 / 3.0 {
            0.0
        } else {
            let v: f64 = StandardUniform.sample(rng);
            v * eig_hi
        }
    });
    PsdMatrix {
        entries: symmetrize(&(&q * DMatrix::from_diagonal(&eigs) * q.transpose())),
    }
}

fn random_conjugated_diagonal<R: Rng + ?Sized>(
    dim: usize,
    eig_lo: f64,
    eig_hi: f64,
    rng: &mut R,
) -> DMatrix<f64> {
    let q = random_orthogonal(dim, rng);
    let eigs = DVector::from_fn(dim, |_, _| {
        let u: f64 = StandardUniform.sample(rng);
        eig_lo + u * (eig_hi - eig_lo)
    });
    symmetrize(&(&q * DMatrix::from_diagonal(&eigs) * q.transpose()))
}

fn random_orthogonal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
    g.qr().q()
}
