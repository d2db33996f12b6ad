//! Sliced inverse regression for curves observed on a shared grid.
//!
//! The estimator centers the curves, partitions the response range into
//! slices, forms the weighted second moment of the slice means, whitens it
//! by the inverse square root of the rank-k truncated sample covariance, and
//! reads direction coefficients off the resulting eigenproblem. Fitted index
//! values are plain linear functionals of the (centered) curves.
//!
//! All sample sums inside [`fit`] run in a canonical observation order
//! (sorted by response, ties broken by curve values), so permuting the input
//! rows reproduces the fit exactly, not merely to rounding.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spectral::{fix_sign, RankPolicy, SpectralDecomp, SymMatrix};
use crate::warning::Warning;

/// A sample of `n` curves on a shared grid of `J` points plus responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    grid: Vec<f64>,
    x: DMatrix<f64>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(grid: Vec<f64>, x: DMatrix<f64>, y: Vec<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::InvalidDataset {
                what: format!("{} curve rows but {} responses", x.nrows(), y.len()),
            });
        }
        if x.nrows() < 2 {
            return Err(Error::InvalidDataset {
                what: "at least 2 observations required".into(),
            });
        }
        if x.ncols() != grid.len() || grid.is_empty() {
            return Err(Error::InvalidDataset {
                what: format!("{} grid points but {} curve columns", grid.len(), x.ncols()),
            });
        }
        for (i, w) in grid.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::GridNotIncreasing { index: i + 1 });
            }
        }
        if x.iter().any(|v| !v.is_finite())
            || y.iter().any(|v| !v.is_finite())
            || grid.iter().any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite);
        }
        Ok(Dataset { grid, x, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// The dataset with the selected rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        let x = DMatrix::from_fn(rows.len(), self.grid.len(), |i, j| self.x[(rows[i], j)]);
        let y = rows.iter().map(|&i| self.y[i]).collect();
        Dataset::new(self.grid.clone(), x, y)
    }
}

/// Subtract column means; returns the centered dataset and the mean curve
/// for prediction-time reuse.
pub fn center(d: &Dataset) -> (Dataset, Vec<f64>) {
    let (x, mean) = center_matrix(d.x());
    (
        Dataset {
            grid: d.grid.clone(),
            x,
            y: d.y.clone(),
        },
        mean,
    )
}

fn center_matrix(x: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    let mean: Vec<f64> = (0..x.ncols()).map(|c| x.column(c).sum() / n).collect();
    let mut centered = x.clone();
    for c in 0..x.ncols() {
        let mut col = centered.column_mut(c);
        col.add_scalar_mut(-mean[c]);
    }
    (centered, mean)
}

/// How the response range is partitioned.
#[derive(Debug, Clone, PartialEq)]
pub enum SliceStrategy {
    /// Sort by response and cut into slices whose sizes differ by at most
    /// one; ties keep their order of appearance.
    EqualFrequency,
    /// Explicit boundaries `b_0 <= y < b_1`, ..., last slice closed on the
    /// right. Requires `S + 1` strictly increasing values covering the data.
    FixedBoundaries(Vec<f64>),
}

/// Where the slices ended up.
#[derive(Debug, Clone, PartialEq)]
pub enum SliceBoundaries {
    /// Offsets into the response-sorted order; slice `s` holds sorted
    /// positions `offsets[s]..offsets[s+1]`.
    IndexPartition(Vec<usize>),
    Values(Vec<f64>),
}

/// Assignment of each observation to exactly one slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceAssignment {
    /// Slice label per observation, in input order.
    pub labels: Vec<usize>,
    pub counts: Vec<usize>,
    pub boundaries: SliceBoundaries,
    pub warnings: Vec<Warning>,
}

impl SliceAssignment {
    pub fn slice_count(&self) -> usize {
        self.counts.len()
    }

    /// Everything in one slice: the degenerate diagnostic mode.
    pub fn single_slice(n: usize) -> SliceAssignment {
        SliceAssignment {
            labels: vec![0; n],
            counts: vec![n],
            boundaries: SliceBoundaries::IndexPartition(vec![0, n]),
            warnings: Vec::new(),
        }
    }
}

/// Partition the responses into `s` nonempty slices.
pub fn make_slices(y: &[f64], s: usize, strategy: &SliceStrategy) -> Result<SliceAssignment> {
    let n = y.len();
    if s < 2 {
        return Err(Error::InvalidArgument {
            what: format!("slice count S = {s} must be at least 2"),
        });
    }
    if s > n {
        return Err(Error::InvalidArgument {
            what: format!("slice count S = {s} exceeds sample size n = {n}"),
        });
    }
    match strategy {
        SliceStrategy::EqualFrequency => {
            let mut order: Vec<usize> = (0..n).collect();
            // stable: ties keep order of appearance
            order.sort_by(|&a, &b| y[a].partial_cmp(&y[b]).expect("responses are finite"));
            let q = n / s;
            let r = n % s;
            let mut offsets = Vec::with_capacity(s + 1);
            offsets.push(0);
            let mut labels = vec![0usize; n];
            let mut counts = Vec::with_capacity(s);
            let mut pos = 0usize;
            for slice in 0..s {
                let size = q + usize::from(slice < r);
                for &i in &order[pos..pos + size] {
                    labels[i] = slice;
                }
                counts.push(size);
                pos += size;
                offsets.push(pos);
            }
            let mut warnings = Vec::new();
            if y.iter().all(|&v| v == y[0]) {
                warnings.push(Warning::DegenerateResponse);
            }
            Ok(SliceAssignment {
                labels,
                counts,
                boundaries: SliceBoundaries::IndexPartition(offsets),
                warnings,
            })
        }
        SliceStrategy::FixedBoundaries(bounds) => {
            if bounds.len() != s + 1 {
                return Err(Error::InvalidArgument {
                    what: format!("{} boundaries given, expected S + 1 = {}", bounds.len(), s + 1),
                });
            }
            for w in bounds.windows(2) {
                if !(w[1] > w[0]) {
                    return Err(Error::InvalidArgument {
                        what: "slice boundaries must be strictly increasing".into(),
                    });
                }
            }
            let mut labels = vec![0usize; n];
            let mut counts = vec![0usize; s];
            for (row, &v) in y.iter().enumerate() {
                if v < bounds[0] || v > bounds[s] {
                    return Err(Error::ResponseOutsideBoundaries { row, value: v });
                }
                // last slice is closed on the right
                let slice = bounds[1..s].partition_point(|&b| b <= v).min(s - 1);
                labels[row] = slice;
                counts[slice] += 1;
            }
            if let Some(slice) = counts.iter().position(|&c| c == 0) {
                return Err(Error::EmptySlice { slice });
            }
            Ok(SliceAssignment {
                labels,
                counts,
                boundaries: SliceBoundaries::Values(bounds.clone()),
                warnings: Vec::new(),
            })
        }
    }
}

/// Per-slice sample proportions and mean curves.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSummary {
    pub boundaries: SliceBoundaries,
    pub counts: Vec<usize>,
    /// `counts[s] / n`, exactly.
    pub p_hat: Vec<f64>,
    /// Slice means, one row per slice.
    pub h_hat: DMatrix<f64>,
}

impl SliceSummary {
    pub fn slice_count(&self) -> usize {
        self.counts.len()
    }

    /// `sum_s p_s h_s h_s'`, the weighted second moment of the slice means.
    pub fn moment_matrix(&self) -> Result<SymMatrix> {
        let w = self.weighted_means();
        SymMatrix::new(&w * w.transpose())
    }

    /// `J x S` matrix whose column `s` is `sqrt(p_s) h_s`.
    pub(crate) fn weighted_means(&self) -> DMatrix<f64> {
        let j = self.h_hat.ncols();
        let s = self.slice_count();
        DMatrix::from_fn(j, s, |r, c| self.p_hat[c].sqrt() * self.h_hat[(c, r)])
    }
}

/// Slice proportions and mean curves of a centered dataset.
pub fn slice_stats(d: &Dataset, slices: &SliceAssignment) -> Result<SliceSummary> {
    let n = d.n();
    if slices.labels.len() != n {
        return Err(Error::LengthMismatch {
            left: slices.labels.len(),
            right: n,
        });
    }
    let s = slices.slice_count();
    let j = d.grid_len();
    let mut h_hat = DMatrix::zeros(s, j);
    for (i, &slice) in slices.labels.iter().enumerate() {
        for c in 0..j {
            h_hat[(slice, c)] += d.x()[(i, c)];
        }
    }
    let mut p_hat = Vec::with_capacity(s);
    for slice in 0..s {
        let count = slices.counts[slice];
        if count == 0 {
            return Err(Error::EmptySlice { slice });
        }
        let inv = 1.0 / count as f64;
        for c in 0..j {
            h_hat[(slice, c)] *= inv;
        }
        p_hat.push(count as f64 / n as f64);
    }
    Ok(SliceSummary {
        boundaries: slices.boundaries.clone(),
        counts: slices.counts.clone(),
        p_hat,
        h_hat,
    })
}

/// Sample covariance `(1/n) sum_i x_i x_i'` of a centered dataset
/// (divisor `n`, not `n - 1`).
pub fn sample_covariance(d: &Dataset) -> Result<SymMatrix> {
    let n = d.n() as f64;
    let j = d.grid_len();
    let x = d.x();
    SymMatrix::from_fn(j, |a, b| x.column(a).dot(&x.column(b)) / n)
}

/// The whitened between-slice moment matrix
/// `R_k^{-1/2} (sum_s p_s h_s h_s') R_k^{-1/2}`, with `R_k` the rank-k
/// truncation of the sample covariance, built literally as
/// truncate-then-power.
pub fn sir_matrix(
    summary: &SliceSummary,
    r_hat: &SymMatrix,
    k: usize,
    policy: &RankPolicy,
) -> Result<(SymMatrix, Vec<Warning>)> {
    if summary.h_hat.ncols() != r_hat.dim() {
        return Err(Error::DimensionMismatch {
            expected: r_hat.dim(),
            got: summary.h_hat.ncols(),
        });
    }
    if k < 1 || k > r_hat.dim() {
        return Err(Error::RankOutOfRange {
            k,
            dim: r_hat.dim(),
        });
    }
    let d = r_hat.eigendecomp()?;
    let mut warnings = Vec::new();
    let rank = d.retained_rank(policy);
    if rank == 0 {
        return Err(Error::ZeroRankCovariance);
    }
    let k_eff = k.min(rank);
    if k_eff < k {
        warnings.push(Warning::ReducedRank {
            requested: k,
            effective: k_eff,
        });
    }
    if let Some(w) = d.eigengap_warning(k_eff, policy) {
        warnings.push(w);
    }
    let truncated = d.truncated(k_eff)?;
    let inv_sqrt = truncated.eigendecomp()?.generalized_power(-0.5, policy);
    let moment = summary.moment_matrix()?;
    let m = inv_sqrt.matrix() * moment.matrix() * inv_sqrt.matrix();
    Ok((SymMatrix::new(m)?, warnings))
}

/// A fitted sliced-inverse-regression model.
#[derive(Debug, Clone)]
pub struct SirFit {
    /// Truncation rank actually used (lowered to the numerical rank of the
    /// covariance when necessary; see the warnings).
    pub k: usize,
    pub s: usize,
    /// Number of direction estimates reported.
    pub p: usize,
    /// Eigenvalues of the whitened between-slice moment matrix, descending;
    /// the structurally nonzero part (at most `min(S - 1, k)` values).
    pub sir_eigenvalues: Vec<f64>,
    /// Direction coefficients, one column per direction (`J x p`).
    pub beta: DMatrix<f64>,
    /// Fitted index values `centered x . beta`, in input row order (`n x p`).
    pub xi_hat: DMatrix<f64>,
    /// Column means used for centering, reused at prediction time.
    pub x_mean: Vec<f64>,
    pub diagnostics: FitDiagnostics,
}

/// Everything the fit learned about conditioning, kept out of the hot path.
#[derive(Debug, Clone, Default)]
pub struct FitDiagnostics {
    /// Eigengap of the sample covariance at the cut, divided by `J`.
    pub eigengap_ratio: Option<f64>,
    /// Cumulative share of variance explained by the leading eigenvectors.
    pub variance_explained: Vec<f64>,
    /// Eigenvalues of the sample covariance, descending.
    pub covariance_eigenvalues: Vec<f64>,
    /// Truncation diagnostic `tr((R^- - R_k'^-) K)` for `k' = 1..`, with `K`
    /// the between-slice moment matrix.
    pub residual_trace_sweep: Vec<f64>,
    pub warnings: Vec<Warning>,
}

/// Fit the direction estimator: slice, whiten on the rank-k truncated
/// covariance, extract the leading `p` directions.
pub fn fit(d: &Dataset, s: usize, k: usize, p: usize, policy: &RankPolicy) -> Result<SirFit> {
    FitEngine::new(d, s, policy)?.directions(k, p, policy, true)
}

/// The rank-independent part of a fit: canonical ordering, centering, the
/// covariance eigendecomposition and the slice summary. Cross-validation
/// builds one of these per fold and sweeps ranks through [`Self::directions`].
pub(crate) struct FitEngine {
    perm: Vec<usize>,
    centered_x: DMatrix<f64>,
    x_mean: Vec<f64>,
    d_r: SpectralDecomp,
    hw: DMatrix<f64>,
    s: usize,
    slice_warnings: Vec<Warning>,
}

impl FitEngine {
    pub(crate) fn new(d: &Dataset, s: usize, _policy: &RankPolicy) -> Result<Self> {
        let n = d.n();
        if n <= s {
            return Err(Error::InvalidArgument {
                what: format!("need n > S; got n = {n}, S = {s}"),
            });
        }

        // Canonical observation order: all sums below run over it, which
        // makes the fit exactly invariant to permutations of the input rows.
        let perm = canonical_order(d);
        let canon = d.select_rows(&perm)?;

        let (centered, x_mean) = center(&canon);
        let r_hat = sample_covariance(&centered)?;
        let d_r = r_hat.eigendecomp()?;

        let slices = make_slices(centered.y(), s, &SliceStrategy::EqualFrequency)?;
        let slice_warnings = slices.warnings.clone();
        let summary = slice_stats(&centered, &slices)?;
        let hw = summary.weighted_means();

        Ok(FitEngine {
            perm,
            centered_x: centered.x().clone(),
            x_mean,
            d_r,
            hw,
            s,
            slice_warnings,
        })
    }

    pub(crate) fn directions(
        &self,
        k: usize,
        p: usize,
        policy: &RankPolicy,
        with_diagnostics: bool,
    ) -> Result<SirFit> {
        let n = self.centered_x.nrows();
        let j = self.centered_x.ncols();
        let s = self.s;
        if k < 1 || k > j {
            return Err(Error::RankOutOfRange { k, dim: j });
        }
        if p < 1 || p > (s - 1).min(k) {
            return Err(Error::InvalidArgument {
                what: format!(
                    "p = {p} must satisfy 1 <= p <= min(S - 1, k) = {}",
                    (s - 1).min(k)
                ),
            });
        }

        let mut warnings = self.slice_warnings.clone();
        let rank = self.d_r.retained_rank(policy);
        if rank == 0 {
            return Err(Error::ZeroRankCovariance);
        }
        let k_eff = k.min(rank);
        if k_eff < k {
            warnings.push(Warning::ReducedRank {
                requested: k,
                effective: k_eff,
            });
        }
        if let Some(w) = self.d_r.eigengap_warning(k_eff, policy) {
            warnings.push(w);
        }
        if p > (s - 1).min(k_eff) {
            return Err(Error::InvalidArgument {
                what: format!(
                    "p = {p} exceeds min(S - 1, effective k) = {}",
                    (s - 1).min(k_eff)
                ),
            });
        }

        // Whitened slice-mean factor W = R_k^{-1/2} [sqrt(p_s) h_s]: the
        // eigenproblem of W W' is solved through the S x S Gram matrix W' W,
        // which carries the same nonzero eigenvalues.
        let w = apply_inv_sqrt(&self.d_r, k_eff, policy, &self.hw);
        let small = SymMatrix::new(w.transpose() * &w)?;
        let small_d = small.eigendecomp()?;

        let n_eigs = (s - 1).min(k_eff);
        let sir_eigenvalues: Vec<f64> =
            small_d.eigenvalues().iter().take(n_eigs).copied().collect();

        // Lift the leading eigenvectors back to curve space: v = W w / sqrt(sigma).
        let sigma_floor = 1e-12 * small_d.lambda_max().max(f64::MIN_POSITIVE);
        let mut directions = DMatrix::zeros(j, p);
        let mut lifted_ok = true;
        for dir in 0..p {
            let sigma = small_d.eigenvalues()[dir];
            if sigma <= sigma_floor {
                lifted_ok = false;
                break;
            }
            let mut v = &w * small_d.eigenvectors().column(dir) / sigma.sqrt();
            fix_sign(&mut v);
            directions.set_column(dir, &v);
        }
        if !lifted_ok {
            // Degenerate spectrum: fall back to the full eigenproblem of
            // W W' so trailing directions are still deterministic.
            let m = SymMatrix::new(&w * w.transpose())?;
            let m_d = m.eigendecomp()?;
            for dir in 0..p {
                directions.set_column(dir, &m_d.eigenvectors().column(dir).clone_owned());
            }
        }

        // beta_j = R_k^{-1/2} v_j; xi = centered x . beta.
        let beta = apply_inv_sqrt(&self.d_r, k_eff, policy, &directions);
        let xi_canonical = &self.centered_x * &beta;
        let mut xi_hat = DMatrix::zeros(n, p);
        for (canon_row, &orig_row) in self.perm.iter().enumerate() {
            for c in 0..p {
                xi_hat[(orig_row, c)] = xi_canonical[(canon_row, c)];
            }
        }

        let diagnostics = if with_diagnostics {
            build_diagnostics(&self.d_r, &self.hw, k_eff, j, policy, warnings)
        } else {
            FitDiagnostics {
                warnings,
                ..FitDiagnostics::default()
            }
        };

        Ok(SirFit {
            k: k_eff,
            s,
            p,
            sir_eigenvalues,
            beta,
            xi_hat,
            x_mean: self.x_mean.clone(),
            diagnostics,
        })
    }
}

/// Index values for new curves: `(x_new - mean) . beta`.
pub fn predict_indices(fit: &SirFit, x_new: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x_new.ncols() != fit.beta.nrows() {
        return Err(Error::DimensionMismatch {
            expected: fit.beta.nrows(),
            got: x_new.ncols(),
        });
    }
    let mut centered = x_new.clone();
    for c in 0..centered.ncols() {
        let mut col = centered.column_mut(c);
        col.add_scalar_mut(-fit.x_mean[c]);
    }
    Ok(centered * &fit.beta)
}

/// Sort rows by response, breaking ties by the curve values so the order
/// depends only on the multiset of observations.
fn canonical_order(d: &Dataset) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..d.n()).collect();
    perm.sort_by(|&a, &b| {
        d.y()[a]
            .partial_cmp(&d.y()[b])
            .expect("responses are finite")
            .then_with(|| {
                for c in 0..d.grid_len() {
                    let ord = d.x()[(a, c)]
                        .partial_cmp(&d.x()[(b, c)])
                        .expect("curve values are finite");
                    if ord != std::cmp::Ordering::Equal {
                        return ord;
                    }
                }
                std::cmp::Ordering::Equal
            })
    });
    perm
}

/// Multiply `R_k^{-1/2}` (through the decomposition of `R`) into a matrix
/// without forming the `J x J` power.
fn apply_inv_sqrt(
    d: &SpectralDecomp,
    k_eff: usize,
    policy: &RankPolicy,
    rhs: &DMatrix<f64>,
) -> DMatrix<f64> {
    let lmax = d.lambda_max();
    let mut out = DMatrix::zeros(rhs.nrows(), rhs.ncols());
    for idx in 0..k_eff {
        let l = d.eigenvalues()[idx];
        if policy.retains(l, lmax) {
            let u = d.eigenvectors().column(idx);
            let coef = u.transpose() * rhs / l.sqrt();
            out += u * coef;
        }
    }
    out
}

fn build_diagnostics(
    d_r: &SpectralDecomp,
    hw: &DMatrix<f64>,
    k_eff: usize,
    j: usize,
    policy: &RankPolicy,
    warnings: Vec<Warning>,
) -> FitDiagnostics {
    let eigengap_ratio = d_r.eigengap(k_eff).ok().map(|g| g / j as f64);
    let covariance_eigenvalues: Vec<f64> = d_r.eigenvalues().iter().copied().collect();
    let total: f64 = covariance_eigenvalues.iter().map(|l| l.max(0.0)).sum();
    let mut variance_explained = Vec::with_capacity(j);
    let mut acc = 0.0;
    for l in &covariance_eigenvalues {
        acc += l.max(0.0);
        variance_explained.push(if total > 0.0 { acc / total } else { 0.0 });
    }

    // Suffix sums of u' K u / lambda over retained eigenpairs give the
    // truncation diagnostic for every cut at once.

    let rank = d_r.retained_rank(policy);
    let per_eig: Vec<f64> = (0..rank)
        .map(|idx| {
            let u = d_r.eigenvectors().column(idx);
            let g = (hw.transpose() * u).norm_squared();
            g / d_r.eigenvalues()[idx]
        })
        .collect();
    let mut residual_trace_sweep = vec![0.0; rank];
    let mut suffix = 0.0;
    for idx in (0..rank).rev() {
        if idx + 1 < rank {
            suffix += per_eig[idx + 1];
        }
        residual_trace_sweep[idx] = suffix;
    }

    FitDiagnostics {
        eigengap_ratio,
        variance_explained,
        covariance_eigenvalues,
        residual_trace_sweep,
        warnings,
    }
}
