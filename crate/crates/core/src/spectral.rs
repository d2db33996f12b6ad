//! Symmetric-matrix spectral toolkit.
//!
//! Everything downstream (kernel inner products, covariance truncation, the
//! inverse-regression eigenproblem) is built from one primitive: the
//! eigendecomposition `A = sum_j lambda_j u_j u_j'` of a symmetric matrix,
//! together with generalized powers `A^alpha` that sum only over eigenvalues
//! a [`RankPolicy`] considers strictly positive. `alpha = -1` is the
//! Moore–Penrose pseudoinverse, `alpha = 0` the orthogonal projection onto
//! the retained range.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::warning::Warning;

/// Relative asymmetry beyond which an input is rejected instead of
/// symmetrized.
const SYMMETRY_TOL: f64 = 1e-8;

/// Relative tolerance on the minimum eigenvalue when a positive-semidefinite
/// input is required.
const PSD_TOL: f64 = 1e-9;

/// A real symmetric matrix, stored so that `a[(i,j)] == a[(j,i)]` exactly.
///
/// Construction symmetrizes `(A + A')/2` when the relative asymmetry is at
/// most `1e-8` (accumulated rounding in moment sums) and rejects anything
/// worse.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    data: DMatrix<f64>,
}

impl SymMatrix {
    /// Build from a square matrix, symmetrizing small rounding asymmetry.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.is_empty() {
            return Err(Error::InvalidArgument {
                what: "matrix dimension must be at least 1".into(),
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let scale = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let mut asym = 0.0_f64;
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if scale > 0.0 && asym > SYMMETRY_TOL * scale {
            return Err(Error::Asymmetric {
                asymmetry: asym / scale,
                tol: SYMMETRY_TOL,
            });
        }
        let mut data = m;
        for i in 0..data.nrows() {
            for j in (i + 1)..data.ncols() {
                let v = (data[(i, j)] + data[(j, i)]) / 2.0;
                data[(i, j)] = v;
                data[(j, i)] = v;
            }
        }
        Ok(SymMatrix { data })
    }

    /// Build from the entries of an exactly symmetric closure.
    ///
    /// `f(i, j)` is evaluated only for `i <= j` and mirrored, so the result
    /// is symmetric by construction.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                data[(i, j)] = v;
                data[(j, i)] = v;
            }
        }
        SymMatrix::new(data)
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// Eigendecomposition with eigenvalues sorted descending and a fixed
    /// eigenvector sign convention, so results are deterministic across runs.
    pub fn eigendecomp(&self) -> Result<SpectralDecomp> {
        sym_eigendecomp(self)
    }

    /// `P_k A P_k`: the matrix with everything outside the top-k eigenspace
    /// removed. Requires the input to be positive semidefinite to tolerance.
    pub fn truncate_covariance(&self, k: usize, policy: &RankPolicy) -> Result<SymMatrix> {
        let d = self.eigendecomp()?;
        d.require_psd()?;
        let _ = policy;
        d.truncated(k)
    }
}

/// Threshold rule deciding which eigenvalues count as strictly positive.
///
/// An eigenvalue is retained iff `lambda > max(rel_tol * lambda_1, abs_floor)`.
/// The exact-zero test in the defining sums is meaningless in floating point,
/// so every pseudoinverse/power operation takes one of these.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankPolicy {
    rel_tol: f64,
    abs_floor: f64,
}

impl RankPolicy {
    pub fn new(rel_tol: f64, abs_floor: f64) -> Result<Self> {
        if !(rel_tol > 0.0 && rel_tol < 1.0) || !(abs_floor >= 0.0) {
            return Err(Error::InvalidRankPolicy);
        }
        Ok(RankPolicy { rel_tol, abs_floor })
    }

    pub fn rel_tol(&self) -> f64 {
        self.rel_tol
    }

    pub fn abs_floor(&self) -> f64 {
        self.abs_floor
    }

    /// The cut below which an eigenvalue counts as zero, given the largest
    /// eigenvalue of the matrix at hand.
    pub fn threshold(&self, lambda_max: f64) -> f64 {
        (self.rel_tol * lambda_max).max(self.abs_floor)
    }

    pub fn retains(&self, lambda: f64, lambda_max: f64) -> bool {
        lambda > self.threshold(lambda_max)
    }
}

impl Default for RankPolicy {
    /// `rel_tol = 1e-10`, `abs_floor = 0`.
    fn default() -> Self {
        RankPolicy {
            rel_tol: 1e-10,
            abs_floor: 0.0,
        }
    }
}

/// Eigendecomposition of a symmetric matrix: eigenvalues descending,
/// eigenvector columns orthonormal, signs fixed so the component of largest
/// magnitude in each eigenvector is positive.
#[derive(Debug, Clone)]
pub struct SpectralDecomp {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

/// Eigendecompose a symmetric matrix.
///
/// Deterministic given the input: eigenvalues are sorted descending (stable
/// ordering) and each eigenvector is flipped so that its entry of largest
/// magnitude (first such entry on ties) is positive.
pub fn sym_eigendecomp(a: &SymMatrix) -> Result<SpectralDecomp> {
    let dim = a.dim();
    let eig = nalgebra::SymmetricEigen::try_new(a.matrix().clone(), f64::EPSILON, 0)
        .ok_or(Error::EigenFailure { dim })?;

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("eigenvalues of a finite symmetric matrix are finite")
    });

    let mut eigenvalues = DVector::zeros(dim);
    let mut eigenvectors = DMatrix::zeros(dim, dim);
    for (dst, &src) in order.iter().enumerate() {
        eigenvalues[dst] = eig.eigenvalues[src];
        let mut col = eig.eigenvectors.column(src).clone_owned();
        fix_sign(&mut col);
        eigenvectors.set_column(dst, &col);
    }
    Ok(SpectralDecomp {
        eigenvalues,
        eigenvectors,
    })
}

/// Flip a vector so its entry of largest magnitude is positive.
pub(crate) fn fix_sign(v: &mut DVector<f64>) {
    let mut best = 0usize;
    let mut best_abs = -1.0_f64;
    for (i, &x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.neg_mut();
    }
}

impl SpectralDecomp {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors, column `j` paired with eigenvalue `j`.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Number of eigenvalues the policy counts as strictly positive.
    pub fn retained_rank(&self, policy: &RankPolicy) -> usize {
        let lmax = self.lambda_max();
        self.eigenvalues
            .iter()
            .filter(|&&l| policy.retains(l, lmax))
            .count()
    }

    /// Reassemble `sum_j lambda_j u_j u_j'` over all eigenvalues.
    pub fn reconstruct(&self) -> SymMatrix {
        self.weighted_outer_sum(|_, l| Some(l))
    }

    /// Generalized power `A^alpha = sum over retained lambda of
    /// lambda^alpha u u'`.
    pub fn generalized_power(&self, alpha: f64, policy: &RankPolicy) -> SymMatrix {
        let lmax = self.lambda_max();
        self.weighted_outer_sum(|_, l| policy.retains(l, lmax).then(|| l.powf(alpha)))
    }

    /// Moore–Penrose pseudoinverse: the generalized power with `alpha = -1`.
    pub fn moore_penrose(&self, policy: &RankPolicy) -> SymMatrix {
        self.generalized_power(-1.0, policy)
    }

    /// Orthogonal projection onto the span of the first `k` eigenvectors.
    pub fn top_k_projection(&self, k: usize) -> Result<SymMatrix> {
        self.check_rank_index(k)?;
        Ok(self.weighted_outer_sum(|j, _| (j < k).then_some(1.0)))
    }

    /// `P_k A P_k = sum_{j<=k} lambda_j u_j u_j'`.
    pub fn truncated(&self, k: usize) -> Result<SymMatrix> {
        self.check_rank_index(k)?;
        Ok(self.weighted_outer_sum(|j, l| (j < k).then_some(l)))
    }

    /// Minimal distance from the `m`-th eigenvalue (1-based) to any eigenvalue
    /// different from it. Errors when all eigenvalues are equal.
    pub fn eigengap(&self, m: usize) -> Result<f64> {
        self.check_rank_index(m)?;
        let lm = self.eigenvalues[m - 1];
        let gap = self
            .eigenvalues
            .iter()
            .filter(|&&l| l != lm)
            .map(|&l| (l - lm).abs())
            .fold(f64::INFINITY, f64::min);
        if gap.is_finite() {
            Ok(gap)
        } else {
            Err(Error::UndefinedEigengap)
        }
    }

    /// Warn when the spectral gap at the cut `k` is below the policy
    /// threshold, i.e. when "the first k eigenvalues" is numerically
    /// ambiguous. `k = dim` never warns: there is nothing below the cut.
    pub fn eigengap_warning(&self, k: usize, policy: &RankPolicy) -> Option<Warning> {
        if k == 0 || k >= self.dim() {
            return None;
        }
        let gap = self.eigenvalues[k - 1] - self.eigenvalues[k];
        let threshold = policy.threshold(self.lambda_max());
        (gap < threshold).then_some(Warning::EigengapTie { k, gap, threshold })
    }

    /// Fail unless the spectrum is nonnegative to relative tolerance.
    pub fn require_psd(&self) -> Result<()> {
        let min_eig = self.eigenvalues[self.dim() - 1];
        if min_eig >= -PSD_TOL * self.lambda_max().max(0.0) {
            Ok(())
        } else {
            Err(Error::NotPsd {
                dim: self.dim(),
                min_eig,
            })
        }
    }

    fn check_rank_index(&self, k: usize) -> Result<()> {
        if k >= 1 && k <= self.dim() {
            Ok(())
        } else {
            Err(Error::RankOutOfRange { k, dim: self.dim() })
        }
    }

    /// `sum_j w(j, lambda_j) u_j u_j'` over the eigenpairs with `w` defined.
    fn weighted_outer_sum(&self, mut w: impl FnMut(usize, f64) -> Option<f64>) -> SymMatrix {
        let dim = self.dim();
        let mut out = DMatrix::zeros(dim, dim);
        for (j, &l) in self.eigenvalues.iter().enumerate() {
            if let Some(wj) = w(j, l) {
                let u = self.eigenvectors.column(j);
                for r in 0..dim {
                    let ur = wj * u[r];
                    for c in r..dim {
                        out[(r, c)] += ur * u[c];
                    }
                }
            }
        }
        for r in 0..dim {
            for c in 0..r {
                out[(r, c)] = out[(c, r)];
            }
        }
        SymMatrix { data: out }
    }
}

/// Hilbert–Schmidt (Frobenius) norm `sqrt(tr(A A'))` of any real matrix.
pub fn hs_norm(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}
