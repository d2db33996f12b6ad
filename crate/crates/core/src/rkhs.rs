//! Finite-grid reproducing-kernel primitives.
//!
//! On a grid `t_1 < ... < t_J` a covariance kernel `K` becomes the Gram
//! matrix `K[(i,j)] = K(t_i, t_j)`, functions become value vectors, and the
//! RKHS inner product becomes `f' K^- g` through the Moore–Penrose inverse.
//! The operations here are the computational forms of the Hilbert-space
//! identities the estimator relies on (the isometry onto the process span,
//! the sup-of-ratios norm characterization, kernel dominance, restriction
//! monotonicity, and the finite-rank projection formula), and the test suite
//! exercises exactly those identities.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::spectral::{RankPolicy, SpectralDecomp, SymMatrix};
use crate::warning::Warning;

/// Relative residual above which a function is declared outside the range of
/// a kernel matrix (the computable stand-in for RKHS membership).
const MEMBERSHIP_TOL: f64 = 1e-6;

/// Relative cut below which the denominator of a norm ratio counts as zero.
const DEGENERATE_TOL: f64 = 1e-14;

/// A covariance kernel evaluable at pairs of grid points.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// Brownian motion: `K(s, t) = min(s, t)` on `[0, inf)`.
    Brownian,
    /// Fractional Brownian motion with Hurst index `h` in (0, 1):
    /// `K(s, t) = (s^{2h} + t^{2h} - |s - t|^{2h}) / 2`.
    FractionalBrownian { hurst: f64 },
    /// A kernel known only through its values on a fixed grid.
    Tabulated { grid: Vec<f64>, matrix: SymMatrix },
}

impl KernelSpec {
    pub fn fractional_brownian(hurst: f64) -> Result<Self> {
        if hurst > 0.0 && hurst < 1.0 {
            Ok(KernelSpec::FractionalBrownian { hurst })
        } else {
            Err(Error::KernelParameter {
                what: format!("Hurst index {hurst} must lie in (0, 1)"),
            })
        }
    }

    pub fn tabulated(grid: Vec<f64>, matrix: SymMatrix) -> Result<Self> {
        if grid.len() != matrix.dim() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: matrix.dim(),
            });
        }
        for (i, w) in grid.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::GridNotIncreasing { index: i + 1 });
            }
        }
        Ok(KernelSpec::Tabulated { grid, matrix })
    }

    /// Evaluate the kernel at a pair of points.
    pub fn eval(&self, s: f64, t: f64) -> Result<f64> {
        match self {
            KernelSpec::Brownian => {
                if s < 0.0 || t < 0.0 {
                    return Err(Error::KernelParameter {
                        what: format!("Brownian kernel is defined on [0, inf); got ({s}, {t})"),
                    });
                }
                Ok(s.min(t))
            }
            KernelSpec::FractionalBrownian { hurst } => {
                if s < 0.0 || t < 0.0 {
                    return Err(Error::KernelParameter {
                        what: format!("fBm kernel is defined on [0, inf); got ({s}, {t})"),
                    });
                }
                let h2 = 2.0 * hurst;
                Ok(0.5 * (s.powf(h2) + t.powf(h2) - (s - t).abs().powf(h2)))
            }
            KernelSpec::Tabulated { grid, matrix } => {
                let i = lookup(grid, s).ok_or(Error::OffGrid { point: s })?;
                let j = lookup(grid, t).ok_or(Error::OffGrid { point: t })?;
                Ok(matrix.matrix()[(i, j)])
            }
        }
    }
}

fn lookup(grid: &[f64], point: f64) -> Option<usize> {
    grid.binary_search_by(|g| g.partial_cmp(&point).expect("grid points are finite"))
        .ok()
}

/// A function known through its values on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::LengthMismatch {
                left: grid.len(),
                right: values.len(),
            });
        }
        for (i, w) in grid.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::GridNotIncreasing { index: i + 1 });
            }
        }
        if values.iter().any(|v| !v.is_finite()) || grid.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(GridFunction { grid, values })
    }

    /// The function with values `(Mc)_i` on the matrix's implicit grid,
    /// indexed 1..=dim; convenient for building elements of the range.
    pub fn from_vector(values: DVector<f64>) -> Result<Self> {
        let grid = (1..=values.len()).map(|i| i as f64).collect();
        GridFunction::new(grid, values.data.into())
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Restriction to the subset of grid indices (used for the nested-grid
    /// monotonicity checks).
    pub fn restrict(&self, indices: &[usize]) -> Result<Self> {
        let grid = indices.iter().map(|&i| self.grid[i]).collect();
        let values = indices.iter().map(|&i| self.values[i]).collect();
        GridFunction::new(grid, values)
    }

    fn vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }
}

/// Gram matrix `K(t_i, t_j)` of a kernel on a grid.
pub fn gram_matrix(kernel: &KernelSpec, grid: &[f64]) -> Result<SymMatrix> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument {
            what: "grid must be nonempty".into(),
        });
    }
    let mut entries = vec![0.0; grid.len() * grid.len()];
    for i in 0..grid.len() {
        for j in i..grid.len() {
            let v = kernel.eval(grid[i], grid[j])?;
            entries[i * grid.len() + j] = v;
            entries[j * grid.len() + i] = v;
        }
    }
    SymMatrix::new(DMatrix::from_row_slice(grid.len(), grid.len(), &entries))
}

fn check_dim(f: &GridFunction, m: &SymMatrix) -> Result<()> {
    if f.len() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            got: f.len(),
        });
    }
    Ok(())
}

/// Assert `f` lies in the retained range of the decomposed matrix:
/// `||(I - K K^-) f|| <= 1e-6 ||f||`.
fn check_membership(f: &DVector<f64>, d: &SpectralDecomp, policy: &RankPolicy) -> Result<()> {
    let norm = f.norm();
    if norm == 0.0 {
        return Ok(());
    }
    let lmax = d.lambda_max();
    // Projection of f onto the retained eigenspace, column by column.
    let mut projected = DVector::zeros(f.len());
    for (j, &l) in d.eigenvalues().iter().enumerate() {
        if policy.retains(l, lmax) {
            let u = d.eigenvectors().column(j);
            projected += u.dot(f) * u;
        }
    }
    let residual = (f - projected).norm();
    if residual <= MEMBERSHIP_TOL * norm {
        Ok(())
    } else {
        Err(Error::NotInRange {
            residual: residual / norm,
            tol: MEMBERSHIP_TOL,
        })
    }
}

/// Apply a generalized power of the decomposed matrix to a vector without
/// forming the full matrix.
fn apply_power(d: &SpectralDecomp, alpha: f64, policy: &RankPolicy, v: &DVector<f64>) -> DVector<f64> {
    let lmax = d.lambda_max();
    let mut out = DVector::zeros(v.len());
    for (j, &l) in d.eigenvalues().iter().enumerate() {
        if policy.retains(l, lmax) {
            let u = d.eigenvectors().column(j);
            out += l.powf(alpha) * u.dot(v) * u;
        }
    }
    out
}

/// RKHS inner product `f' R^- g` on the grid, with membership checks on both
/// arguments.
pub fn rkhs_inner(
    f: &GridFunction,
    g: &GridFunction,
    r: &SymMatrix,
    policy: &RankPolicy,
) -> Result<f64> {
    check_dim(f, r)?;
    check_dim(g, r)?;
    let d = r.eigendecomp()?;
    let fv = f.vector();
    let gv = g.vector();
    check_membership(&fv, &d, policy)?;
    check_membership(&gv, &d, policy)?;
    Ok(apply_power(&d, -1.0, policy, &gv).dot(&fv))
}

/// The norm ratio `|sum_i a_i f(t_i)|^2 / (a' K a)` whose supremum over all
/// coefficient vectors is the squared RKHS norm.
pub fn fortet_ratio(f: &GridFunction, k: &SymMatrix, a: &[f64]) -> Result<f64> {
    check_dim(f, k)?;
    if a.len() != k.dim() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: k.dim(),
        });
    }
    let av = DVector::from_column_slice(a);
    let quad = av.dot(&(k.matrix() * &av));
    let d = k.eigendecomp()?;
    let floor = DEGENERATE_TOL * av.norm_squared() * d.lambda_max().max(0.0);
    if !(quad > floor) {
        return Err(Error::DegenerateDirection { value: quad });
    }
    let numer: f64 = a.iter().zip(f.values()).map(|(ai, fi)| ai * fi).sum();
    Ok(numer * numer / quad)
}

/// Squared RKHS norm `f' K^- f`; equals the supremum of [`fortet_ratio`]
/// over admissible coefficient vectors on the same grid.
pub fn fortet_norm_sq(f: &GridFunction, k: &SymMatrix, policy: &RankPolicy) -> Result<f64> {
    check_dim(f, k)?;
    let d = k.eigendecomp()?;
    let fv = f.vector();
    check_membership(&fv, &d, policy)?;
    Ok(apply_power(&d, -1.0, policy, &fv).dot(&fv))
}

/// Finite-grid dominance trace `tr(K1 K2^-)`, the n-th term of the sequence
/// whose limit is the trace of the dominance operator of `K2` over `K1`.
///
/// When `K2 - K1` fails to be positive semidefinite to tolerance the value
/// is still returned, tagged with a warning.
pub fn dominance_trace(
    k1: &SymMatrix,
    k2: &SymMatrix,
    policy: &RankPolicy,
) -> Result<(f64, Vec<Warning>)> {
    if k1.dim() != k2.dim() {
        return Err(Error::DimensionMismatch {
            expected: k2.dim(),
            got: k1.dim(),
        });
    }
    let mut warnings = Vec::new();
    let diff = SymMatrix::new(k2.matrix() - k1.matrix())?;
    let diff_d = diff.eigendecomp()?;
    let min_eig = diff_d.eigenvalues()[diff.dim() - 1];
    if min_eig < -1e-9 * diff_d.lambda_max().abs().max(1e-300) {
        warnings.push(Warning::DominanceViolated { min_eig });
    }
    let d2 = k2.eigendecomp()?;
    // tr(K1 K2^-) = sum over retained eigenpairs of u' K1 u / lambda.
    let lmax = d2.lambda_max();
    let mut trace = 0.0;
    for (j, &l) in d2.eigenvalues().iter().enumerate() {
        if policy.retains(l, lmax) {
            let u = d2.eigenvectors().column(j);
            trace += u.dot(&(k1.matrix() * u)) / l;
        }
    }
    Ok((trace, warnings))
}

/// The truncation diagnostic `tr((R^- - R_k^-) K)`: the part of the
/// dominance trace carried by eigenvalues beyond the cut `k`.
pub fn residual_trace(
    r: &SymMatrix,
    k_mat: &SymMatrix,
    k: usize,
    policy: &RankPolicy,
) -> Result<f64> {
    if r.dim() != k_mat.dim() {
        return Err(Error::DimensionMismatch {
            expected: r.dim(),
            got: k_mat.dim(),
        });
    }
    let d = r.eigendecomp()?;
    d.require_psd()?;
    if k < 1 || k > r.dim() {
        return Err(Error::RankOutOfRange { k, dim: r.dim() });
    }
    let lmax = d.lambda_max();
    let mut trace = 0.0;
    for (j, &l) in d.eigenvalues().iter().enumerate() {
        if j >= k && policy.retains(l, lmax) {
            let u = d.eigenvectors().column(j);
            trace += u.dot(&(k_mat.matrix() * u)) / l;
        }
    }
    Ok(trace)
}

/// Coefficients `c = R^- f` of the grid function in the span of the kernel
/// sections, i.e. the inverse image of `f` under the process isometry:
/// the associated random variable is `c' X` and its variance is `c' R c`.
pub fn loeve_coefficients(
    f: &GridFunction,
    r: &SymMatrix,
    policy: &RankPolicy,
) -> Result<DVector<f64>> {
    check_dim(f, r)?;
    let d = r.eigendecomp()?;
    let fv = f.vector();
    check_membership(&fv, &d, policy)?;
    Ok(apply_power(&d, -1.0, policy, &fv))
}

/// Coefficients `c = R_k^- f` of the RKHS projection of `f` onto the span of
/// the kernel sections restricted to the top-k eigenspace; the projected
/// function has grid values `R c`.
pub fn rkhs_project(
    f: &GridFunction,
    r: &SymMatrix,
    k: usize,
    policy: &RankPolicy,
) -> Result<DVector<f64>> {
    check_dim(f, r)?;
    let d = r.eigendecomp()?;
    if k < 1 || k > r.dim() {
        return Err(Error::RankOutOfRange { k, dim: r.dim() });
    }
    let lmax = d.lambda_max();
    let fv = f.vector();
    let mut out = DVector::zeros(fv.len());
    for (j, &l) in d.eigenvalues().iter().enumerate() {
        if j < k && policy.retains(l, lmax) {
            let u = d.eigenvectors().column(j);
            out += u.dot(&fv) / l * u;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{rng_from_seed, standard_normal, standard_normals};
    use rand::Rng;

    fn brownian_gram(grid: &[f64]) -> SymMatrix {
        gram_matrix(&KernelSpec::Brownian, grid).unwrap()
    }

    fn unit_grid(j: usize) -> Vec<f64> {
        (1..=j).map(|v| v as f64 / j as f64).collect()
    }

    #[test]
    fn brownian_gram_is_min_matrix() {
        let g = brownian_gram(&[0.25, 0.5, 1.0]);
        let expect = [
            [0.25, 0.25, 0.25],
            [0.25, 0.5, 0.5],
            [0.25, 0.5, 1.0],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(g.matrix()[(i, j)], expect[i][j]);
            }
        }
    }

    #[test]
    fn fbm_kernel_examples() {
        let k = KernelSpec::fractional_brownian(0.75).unwrap();
        assert!((k.eval(1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(KernelSpec::fractional_brownian(1.0).is_err());
        assert!(KernelSpec::fractional_brownian(0.0).is_err());
    }

    #[test]
    fn tabulated_kernel_rejects_off_grid_queries() {
        let grid = vec![0.1, 0.2, 0.3];
        let m = brownian_gram(&grid);
        let k = KernelSpec::tabulated(grid, m).unwrap();
        assert!((k.eval(0.2, 0.3).unwrap() - 0.2).abs() < 1e-15);
        assert!(matches!(k.eval(0.25, 0.3), Err(Error::OffGrid { .. })));
    }

    #[test]
    fn gram_matrices_are_psd_to_tolerance() {
        for seed in 0..20u64 {
            let mut rng = rng_from_seed(seed);
            let j = rng.gen_range(3..=12);
            let mut grid = unit_grid(j);
            // jitter, keeping strict monotonicity
            for g in grid.iter_mut() {
                *g += rng.gen_range(-0.2..0.2) / (2.0 * j as f64);
            }
            for kernel in [
                KernelSpec::Brownian,
                KernelSpec::fractional_brownian(0.75).unwrap(),
            ] {
                let d = gram_matrix(&kernel, &grid).unwrap().eigendecomp().unwrap();
                let min = d.eigenvalues()[j - 1];
                assert!(min >= -1e-9 * d.lambda_max(), "min eigenvalue {min}");
            }
        }
    }

    #[test]
    fn inner_product_on_rank_deficient_diagonal() {
        let r = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0])).unwrap();
        let f = GridFunction::new(vec![0.0, 1.0], vec![2.0, 0.0]).unwrap();
        let g = GridFunction::new(vec![0.0, 1.0], vec![4.0, 0.0]).unwrap();
        let v = rkhs_inner(&f, &g, &r, &RankPolicy::default()).unwrap();
        assert!((v - 4.0).abs() < 1e-12);

        // A function sticking out of the range is rejected.
        let bad = GridFunction::new(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            rkhs_inner(&bad, &g, &r, &RankPolicy::default()),
            Err(Error::NotInRange { .. })
        ));
    }

    #[test]
    fn reproducing_property_on_kernel_columns() {
        let policy = RankPolicy::default();
        for seed in 0..10u64 {
            let mut rng = rng_from_seed(seed);
            let j = rng.gen_range(3..=10);
            let grid = unit_grid(j);
            let k = brownian_gram(&grid);
            let s = rng.gen_range(0..j);
            let t = rng.gen_range(0..j);
            let ks = GridFunction::new(grid.clone(), k.matrix().column(s).iter().copied().collect())
                .unwrap();
            let kt = GridFunction::new(grid.clone(), k.matrix().column(t).iter().copied().collect())
                .unwrap();
            let ip = rkhs_inner(&ks, &kt, &k, &policy).unwrap();
            assert!(
                (ip - k.matrix()[(s, t)]).abs() <= 1e-8,
                "<K_s, K_t> = {ip} vs K(s,t) = {}",
                k.matrix()[(s, t)]
            );
        }
    }

    #[test]
    fn isometry_through_quadratic_form() {
        let policy = RankPolicy::default();
        for seed in 0..10u64 {
            let mut rng = rng_from_seed(seed);
            let j = rng.gen_range(3..=8);
            let grid = unit_grid(j);
            let r = brownian_gram(&grid);
            let c = DVector::from_vec(standard_normals(&mut rng, j));
            let d = DVector::from_vec(standard_normals(&mut rng, j));
            let fc = GridFunction::new(grid.clone(), (r.matrix() * &c).data.into()).unwrap();
            let fd = GridFunction::new(grid.clone(), (r.matrix() * &d).data.into()).unwrap();
            let lhs = rkhs_inner(&fc, &fd, &r, &policy).unwrap();
            let rhs = c.dot(&(r.matrix() * &d));
            assert!((lhs - rhs).abs() <= 1e-8 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn fortet_ratio_examples() {
        let grid = unit_grid(4);
        let k = brownian_gram(&grid);
        // f = t-th kernel column, a = e_t: ratio = K(t,t)^2 / K(t,t).
        let t = 2;
        let f =
            GridFunction::new(grid.clone(), k.matrix().column(t).iter().copied().collect()).unwrap();
        let mut a = vec![0.0; 4];
        a[t] = 1.0;
        let ratio = fortet_ratio(&f, &k, &a).unwrap();
        assert!((ratio - k.matrix()[(t, t)]).abs() < 1e-12);

        // Zero function: ratio 0 for any admissible direction.
        let zero = GridFunction::new(grid.clone(), vec![0.0; 4]).unwrap();
        assert_eq!(fortet_ratio(&zero, &k, &a).unwrap(), 0.0);

        // Vanishing quadratic form is rejected.
        let singular =
            SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).unwrap();
        let f2 = GridFunction::new(vec![0.0, 1.0], vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            fortet_ratio(&f2, &singular, &[0.0, 1.0]),
            Err(Error::DegenerateDirection { .. })
        ));
    }

    #[test]
    fn fortet_ratio_never_exceeds_quadratic_bound() {
        // f = Kc: the ratio is at most c'Kc with equality at a = c.
        let grid = unit_grid(6);
        let k = brownian_gram(&grid);
        let mut rng = rng_from_seed(42);
        let c = DVector::from_vec(standard_normals(&mut rng, 6));
        let f = GridFunction::new(grid.clone(), (k.matrix() * &c).data.into()).unwrap();
        let bound = c.dot(&(k.matrix() * &c));

        let at_c = fortet_ratio(&f, &k, c.as_slice()).unwrap();
        assert!((at_c - bound).abs() <= 1e-10 * bound);

        let mut best = 0.0_f64;
        for _ in 0..100_000 {
            let a = standard_normals(&mut rng, 6);
            if let Ok(r) = fortet_ratio(&f, &k, &a) {
                best = best.max(r);
            }
        }
        assert!(best <= bound + 1e-9, "search found {best} > bound {bound}");
    }

    #[test]
    fn fortet_norm_examples() {
        let policy = RankPolicy::default();
        let grid = unit_grid(6);
        let k = brownian_gram(&grid);
        let mut rng = rng_from_seed(3);
        let c = DVector::from_vec(standard_normals(&mut rng, 6));
        let f = GridFunction::new(grid.clone(), (k.matrix() * &c).data.into()).unwrap();
        let norm_sq = fortet_norm_sq(&f, &k, &policy).unwrap();
        let expect = c.dot(&(k.matrix() * &c));
        assert!((norm_sq - expect).abs() <= 1e-9 * expect);

        // Identity kernel: the norm is Euclidean.
        let eye = SymMatrix::new(DMatrix::identity(3, 3)).unwrap();
        let g = GridFunction::new(vec![0.0, 0.5, 1.0], vec![1.0, -2.0, 2.0]).unwrap();
        assert!((fortet_norm_sq(&g, &eye, &policy).unwrap() - 9.0).abs() < 1e-12);

        // Random search approaches the norm from below.
        let mut best = 0.0_f64;
        for _ in 0..100_000 {
            let a = standard_normals(&mut rng, 6);
            if let Ok(r) = fortet_ratio(&f, &k, &a) {
                best = best.max(r);
            }
        }
        assert!(best <= norm_sq + 1e-9);
        assert!(best >= 0.99 * norm_sq, "search reached {best} of {norm_sq}");
    }

    #[test]
    fn dominance_trace_examples() {
        let policy = RankPolicy::default();
        let grid = unit_grid(5);
        let k2 = brownian_gram(&grid);
        let (t, w) = dominance_trace(&k2, &k2, &policy).unwrap();
        assert!(w.is_empty());
        assert!((t - 5.0).abs() <= 1e-9, "full-rank self trace {t}");

        let zero = SymMatrix::new(DMatrix::zeros(5, 5)).unwrap();
        let (t0, _) = dominance_trace(&zero, &k2, &policy).unwrap();
        assert!(t0.abs() <= 1e-12);

        // Non-dominating pair is computed but warned.
        let (_, w) = dominance_trace(&k2, &zero, &policy).unwrap();
        assert!(matches!(w.as_slice(), [Warning::DominanceViolated { .. }]));
    }

    #[test]
    fn dominance_trace_monotone_on_nested_grids() {
        // K1 = h h' with h = K2 c on the full grid; restricting to nested
        // grids the trace is nondecreasing and reaches c' K2 c.
        let policy = RankPolicy::default();
        let full = unit_grid(8);
        let k_full = brownian_gram(&full);
        let mut rng = rng_from_seed(9);
        let c = DVector::from_vec(standard_normals(&mut rng, 8));
        let h = k_full.matrix() * &c;
        let target = c.dot(&h);

        let mut last = f64::NEG_INFINITY;
        for m in 1..=8usize {
            let idx: Vec<usize> = (8 - m..8).collect();
            let sub_grid: Vec<f64> = idx.iter().map(|&i| full[i]).collect();
            let k2 = brownian_gram(&sub_grid);
            let hv: Vec<f64> = idx.iter().map(|&i| h[i]).collect();
            let hm = DVector::from_vec(hv);
            let k1 = SymMatrix::new(&hm * hm.transpose()).unwrap();
            let (t, _) = dominance_trace(&k1, &k2, &policy).unwrap();
            assert!(t >= last - 1e-8, "trace decreased: {t} < {last}");
            assert!(t >= -1e-9);
            last = t;
        }
        assert!((last - target).abs() <= 1e-8 * target.abs().max(1.0));
    }

    #[test]
    fn residual_trace_examples() {
        let policy = RankPolicy::default();
        let grid = unit_grid(7);
        let r = brownian_gram(&grid);
        let d = r.eigendecomp().unwrap();

        // k = dim: nothing beyond the cut.
        let k_mat = brownian_gram(&grid);
        assert!(residual_trace(&r, &k_mat, 7, &policy).unwrap().abs() <= 1e-12);

        // K = 0.
        let zero = SymMatrix::new(DMatrix::zeros(7, 7)).unwrap();
        assert_eq!(residual_trace(&r, &zero, 3, &policy).unwrap(), 0.0);

        // Rank-1 K aligned with the top eigenvector vanishes at k = 1.
        let u1 = d.eigenvectors().column(0).clone_owned();
        let aligned = SymMatrix::new(d.eigenvalues()[0] * &u1 * u1.transpose()).unwrap();
        let at1 = residual_trace(&r, &aligned, 1, &policy).unwrap();
        assert!(at1.abs() <= 1e-9, "aligned rank-1 residual {at1}");

        // Nonincreasing sweep hitting 0 at k = dim.
        let mut prev = f64::INFINITY;
        for k in 1..=7 {
            let v = residual_trace(&r, &k_mat, k, &policy).unwrap();
            assert!(v <= prev + 1e-10);
            assert!(v >= -1e-8);
            prev = v;
        }
        assert!(prev.abs() <= 1e-12);
    }

    #[test]
    fn loeve_coefficients_examples() {
        let policy = RankPolicy::default();
        let grid = unit_grid(6);
        let r = brownian_gram(&grid);

        // f = t-th column of R -> c = e_t.
        let t = 3;
        let f =
            GridFunction::new(grid.clone(), r.matrix().column(t).iter().copied().collect()).unwrap();
        let c = loeve_coefficients(&f, &r, &policy).unwrap();
        for i in 0..6 {
            let expect = if i == t { 1.0 } else { 0.0 };
            assert!((c[i] - expect).abs() <= 1e-8, "c[{i}] = {}", c[i]);
        }

        // f = 0 -> c = 0.
        let zero = GridFunction::new(grid.clone(), vec![0.0; 6]).unwrap();
        assert_eq!(loeve_coefficients(&zero, &r, &policy).unwrap().norm(), 0.0);

        // Round trip on a full-rank matrix, plus the isometry of variances.
        let mut rng = rng_from_seed(8);
        let c0 = DVector::from_vec(standard_normals(&mut rng, 6));
        let f = GridFunction::new(grid.clone(), (r.matrix() * &c0).data.into()).unwrap();
        let c = loeve_coefficients(&f, &r, &policy).unwrap();
        assert!((&c - &c0).norm() <= 1e-8 * c0.norm());
        let reconstructed = (r.matrix() * &c - f.vector()).norm();
        assert!(reconstructed <= 1e-6 * f.vector().norm());
        let var = c.dot(&(r.matrix() * &c));
        let norm_sq = fortet_norm_sq(&f, &r, &policy).unwrap();
        assert!((var - norm_sq).abs() <= 1e-8 * norm_sq.max(1.0));
    }

    #[test]
    fn projection_is_identity_on_full_span() {
        let policy = RankPolicy::default();
        let grid = unit_grid(5);
        let r = brownian_gram(&grid);
        let mut rng = rng_from_seed(21);
        let c0 = DVector::from_vec(standard_normals(&mut rng, 5));
        let f = GridFunction::new(grid.clone(), (r.matrix() * &c0).data.into()).unwrap();
        let c = rkhs_project(&f, &r, 5, &policy).unwrap();
        assert!((&c - &c0).norm() <= 1e-8 * c0.norm());
    }

    #[test]
    fn projection_annihilates_orthogonal_directions() {
        let policy = RankPolicy::default();
        let grid = unit_grid(6);
        let r = brownian_gram(&grid);
        let d = r.eigendecomp().unwrap();
        let k = 3usize;
        // f proportional to the (k+1)-th eigenvector has no top-k component.
        let f_vec = d.eigenvalues()[k] * d.eigenvectors().column(k).clone_owned();
        let f = GridFunction::new(grid.clone(), f_vec.data.into()).unwrap();
        let c = rkhs_project(&f, &r, k, &policy).unwrap();
        let values = r.matrix() * &c;
        for j in 0..k {
            let overlap = d.eigenvectors().column(j).dot(&values);
            assert!(overlap.abs() <= 1e-9);
        }
        assert!(values.norm() <= 1e-9);
    }

    #[test]
    fn projection_matches_least_squares_oracle() {
        let policy = RankPolicy::default();
        let grid = unit_grid(10);
        let r = brownian_gram(&grid);
        let d = r.eigendecomp().unwrap();
        let k = 3usize;
        let mut rng = rng_from_seed(33);
        let dd = DVector::from_vec(standard_normals(&mut rng, 10));
        let f = GridFunction::new(grid.clone(), (r.matrix() * &dd).data.into()).unwrap();

        let c = rkhs_project(&f, &r, k, &policy).unwrap();

        // Orthogonality from the projection identity: the residual is
        // perpendicular, in plain evaluation, to every direction in the
        // truncated range.
        let resid = f.vector() - r.matrix() * &c;
        for j in 0..k {
            let a = d.eigenvectors().column(j);
            assert!(resid.dot(&a).abs() <= 1e-8 * f.vector().norm().max(1.0));
        }

        // Brute-force least squares in the RKHS metric over the span of the
        // top-k eigenvector coefficients: minimize (d - sum alpha_i u_i)' R
        // (d - sum alpha_i u_i).
        let mut gram_k = DMatrix::zeros(k, k);
        let mut rhs = DVector::zeros(k);
        for i in 0..k {
            let ui = d.eigenvectors().column(i);
            rhs[i] = ui.dot(&(r.matrix() * &dd));
            for j in 0..k {
                let uj = d.eigenvectors().column(j);
                gram_k[(i, j)] = ui.dot(&(r.matrix() * uj));
            }
        }
        let alpha = gram_k.lu().solve(&rhs).unwrap();
        let mut c_oracle = DVector::zeros(10);
        for i in 0..k {
            c_oracle += alpha[i] * d.eigenvectors().column(i);
        }
        let dist = |c: &DVector<f64>| {
            let e = &dd - c;
            e.dot(&(r.matrix() * &e))
        };
        let impl_resid = dist(&c);
        let oracle_resid = dist(&c_oracle);
        assert!(
            (impl_resid - oracle_resid).abs() <= 1e-8 * oracle_resid.max(1.0),
            "projection residual {impl_resid} vs least squares {oracle_resid}"
        );
    }

    #[test]
    fn restriction_monotonicity_of_the_norm() {
        // Prop-style check: restricting a function to a subgrid can only
        // shrink its RKHS norm.
        let policy = RankPolicy::default();
        for seed in 0..20u64 {
            let mut rng = rng_from_seed(seed);
            let j = rng.gen_range(4..=12);
            let grid = unit_grid(j);
            let k = brownian_gram(&grid);
            let c = DVector::from_vec(standard_normals(&mut rng, j));
            let f = GridFunction::new(grid.clone(), (k.matrix() * &c).data.into()).unwrap();

            let m = rng.gen_range(2..j);
            let mut idx: Vec<usize> = (0..j).collect();
            // random subset of size m, order preserved
            while idx.len() > m {
                let drop = rng.gen_range(0..idx.len());
                idx.remove(drop);
            }
            let sub_grid: Vec<f64> = idx.iter().map(|&i| grid[i]).collect();
            let sub_k = brownian_gram(&sub_grid);
            let sub_f = f.restrict(&idx).unwrap();

            let full = fortet_norm_sq(&f, &k, &policy).unwrap();
            let restricted = fortet_norm_sq(&sub_f, &sub_k, &policy).unwrap();
            assert!(
                restricted <= full + 1e-8 * full.max(1.0),
                "restriction grew the norm: {restricted} > {full}"
            );
        }
    }

    #[test]
    fn dominance_shrinks_the_norm() {
        // When K2 >= K1 and f is in the smaller space, the K2 norm is the
        // smaller one.
        let policy = RankPolicy::default();
        for seed in 0..20u64 {
            let mut rng = rng_from_seed(100 + seed);
            let j = rng.gen_range(3..=10);
            let grid = unit_grid(j);
            let k1 = brownian_gram(&grid);
            // K2 = K1 + PSD bump.
            let b = DMatrix::from_fn(j, 2, |_, _| standard_normal(&mut rng));
            let bump = &b * b.transpose();
            let k2 = SymMatrix::new(k1.matrix() + bump).unwrap();
            let c = DVector::from_vec(standard_normals(&mut rng, j));
            let f = GridFunction::new(grid.clone(), (k1.matrix() * &c).data.into()).unwrap();
            let n1 = fortet_norm_sq(&f, &k1, &policy).unwrap();
            let n2 = fortet_norm_sq(&f, &k2, &policy).unwrap();
            assert!(n2 <= n1 + 1e-8 * n1.max(1.0), "{n2} > {n1}");
        }
    }
}
