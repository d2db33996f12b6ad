//! Link-function smoothing and cross-validated choice of the truncation rank.
//!
//! The link between fitted indices and the response is estimated by a
//! Nadaraya–Watson regressor with a Gaussian product kernel and
//! normal-reference bandwidths. The rank selector refits the direction
//! estimator and the smoother on held-in data for every candidate rank,
//! scores held-out squared error, and picks the minimizer (ties toward the
//! smaller rank).

use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::simgen::rng_from_seed;
use crate::sir::{predict_indices, Dataset, FitEngine};
use crate::spectral::RankPolicy;
use crate::warning::Warning;

/// Below this, the sum of naive kernel weights would have underflowed and a
/// plain implementation would return 0/0; we fall back to the nearest
/// training point (the limit of the estimator) and warn.
const LOG_WEIGHT_UNDERFLOW: f64 = -690.0;

/// A fitted Nadaraya–Watson regressor on index values.
#[derive(Debug, Clone)]
pub struct SmootherModel {
    xi: DMatrix<f64>,
    y: Vec<f64>,
    bandwidths: Vec<f64>,
    pub warnings: Vec<Warning>,
}

impl SmootherModel {
    /// Assemble a model with explicit bandwidths (used by tests probing the
    /// small-bandwidth interpolation limit).
    pub fn with_bandwidths(xi: DMatrix<f64>, y: Vec<f64>, bandwidths: Vec<f64>) -> Result<Self> {
        if xi.nrows() != y.len() {
            return Err(Error::LengthMismatch {
                left: xi.nrows(),
                right: y.len(),
            });
        }
        if bandwidths.len() != xi.ncols() || bandwidths.iter().any(|&h| !(h > 0.0)) {
            return Err(Error::InvalidArgument {
                what: "one positive bandwidth per coordinate required".into(),
            });
        }
        Ok(SmootherModel {
            xi,
            y,
            bandwidths,
            warnings: Vec::new(),
        })
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn training_len(&self) -> usize {
        self.y.len()
    }
}

/// Fit the smoother: per-coordinate normal-reference bandwidths
/// `h_j = sigma_j * m^(-1/(4+p))`, floored when a coordinate is constant.
pub fn fit_smoother(xi: &DMatrix<f64>, y: &[f64]) -> Result<SmootherModel> {
    let m = xi.nrows();
    let p = xi.ncols();
    if m != y.len() {
        return Err(Error::LengthMismatch {
            left: m,
            right: y.len(),
        });
    }
    if m < 2 || p == 0 {
        return Err(Error::InvalidArgument {
            what: "smoother needs at least 2 training points and 1 coordinate".into(),
        });
    }
    if xi.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }

    let rate = (m as f64).powf(-1.0 / (4.0 + p as f64));
    let mut bandwidths = Vec::with_capacity(p);
    let mut warnings = Vec::new();
    for c in 0..p {
        let col = xi.column(c);
        let mean = col.sum() / m as f64;
        let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        let sd = (ss / (m as f64 - 1.0)).sqrt();
        let mut h = sd * rate;
        if !(h > 0.0) {
            let range = col.max() - col.min();
            h = 1e-8 * (range + 1e-8);
            warnings.push(Warning::BandwidthFloored { coordinate: c });
        }
        bandwidths.push(h);
    }
    Ok(SmootherModel {
        xi: xi.clone(),
        y: y.to_vec(),
        bandwidths,
        warnings,
    })
}

/// Predict at new index values: a Gaussian-product weighted average of the
/// training responses (always a convex combination, so predictions stay in
/// the training response range).
///
/// Weights are formed in log space and shifted by their maximum before
/// exponentiating, which evaluates the same estimator without premature
/// underflow; queries where even the shifted sum would have underflowed in a
/// naive evaluation collapse to the nearest training response and are warned.
pub fn predict_smoother(model: &SmootherModel, xi_new: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<Warning>)> {
    if xi_new.ncols() != model.xi.ncols() {
        return Err(Error::DimensionMismatch {
            expected: model.xi.ncols(),
            got: xi_new.ncols(),
        });
    }
    let m = model.xi.nrows();
    let p = model.xi.ncols();
    let mut out = Vec::with_capacity(xi_new.nrows());
    let mut warnings = Vec::new();
    let mut log_w = vec![0.0_f64; m];
    for q in 0..xi_new.nrows() {
        let mut max_lw = f64::NEG_INFINITY;
        for i in 0..m {
            let mut d2 = 0.0;
            for c in 0..p {
                let z = (xi_new[(q, c)] - model.xi[(i, c)]) / model.bandwidths[c];
                d2 += z * z;
            }
            let lw = -0.5 * d2;
            log_w[i] = lw;
            if lw > max_lw {
                max_lw = lw;
            }
        }
        if max_lw < LOG_WEIGHT_UNDERFLOW {
            // Far query: nearest training point (largest log weight).
            let nearest = log_w
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite log weights"))
                .map(|(i, _)| i)
                .expect("nonempty training set");
            warnings.push(Warning::FarQueryFallback { row: q });
            out.push(model.y[nearest]);
            continue;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..m {
            let w = (log_w[i] - max_lw).exp();
            num += w * model.y[i];
            den += w;
        }
        out.push(num / den);
    }
    Ok((out, warnings))
}

/// Root-mean-square prediction error `sqrt((1/n) sum (y_hat - y)^2)`.
pub fn prediction_error(y_hat: &[f64], y: &[f64]) -> Result<f64> {
    if y_hat.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: y_hat.len(),
            right: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::InvalidArgument {
            what: "prediction error needs at least one observation".into(),
        });
    }
    let ss: f64 = y_hat
        .iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((ss / y.len() as f64).sqrt())
}

/// How held-out folds are formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CvScheme {
    /// Leave one observation out at a time.
    Loo,
    /// One seeded split with this fraction held out for testing.
    Holdout { test_fraction: f64 },
}

impl CvScheme {
    /// Leave-one-out up to n = 200, then a seeded 70/30 holdout.
    pub fn default_for(n: usize) -> CvScheme {
        if n <= 200 {
            CvScheme::Loo
        } else {
            CvScheme::Holdout { test_fraction: 0.3 }
        }
    }
}

/// Score of one candidate rank.
#[derive(Debug, Clone, PartialEq)]
pub struct CvEntry {
    pub k: usize,
    /// Sum of held-out squared errors; `None` when the candidate was
    /// infeasible on every fold.
    pub cv: Option<f64>,
    pub note: Option<String>,
    pub folds_used: usize,
    pub folds_skipped: usize,
}

/// The full cross-validation record.
#[derive(Debug, Clone)]
pub struct CvReport {
    pub entries: Vec<CvEntry>,
    pub k_star: usize,
    pub scheme: CvScheme,
    pub seed: u64,
    /// Standard-error estimate for a CV sum, from the spread of per-fold
    /// errors at the selected rank.
    pub noise_se: f64,
    /// Whether the spread of CV over the grid exceeds twice the noise
    /// estimate; when false the minimum is not distinguishable from noise.
    pub significant_minimum: bool,
}

/// Select the truncation rank by cross-validation: for every candidate rank
/// refit directions and smoother on held-in data, predict the held-out
/// responses, and minimize the accumulated squared error.
///
/// Deterministic given `(data, scheme, seed)`; all fold sums run in a
/// canonical observation order, so permuting the input rows changes nothing.
pub fn cv_select_k(
    d: &Dataset,
    s: usize,
    p: usize,
    k_grid: &[usize],
    scheme: CvScheme,
    seed: u64,
    policy: &RankPolicy,
) -> Result<CvReport> {
    if k_grid.is_empty() {
        return Err(Error::InvalidArgument {
            what: "rank grid must be nonempty".into(),
        });
    }
    let n = d.n();
    let j = d.grid_len();

    // Canonicalize once; folds and their sums are then order-free.
    let canon = d.select_rows(&canonical_order_of(d))?;

    let folds: Vec<Vec<usize>> = match scheme {
        CvScheme::Loo => (0..n).map(|i| vec![i]).collect(),
        CvScheme::Holdout { test_fraction } => {
            if !(test_fraction > 0.0 && test_fraction < 1.0) {
                return Err(Error::InvalidArgument {
                    what: format!("holdout fraction {test_fraction} must lie in (0, 1)"),
                });
            }
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng_from_seed(seed));
            let test_len = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
            let mut test: Vec<usize> = idx[..test_len].to_vec();
            test.sort_unstable();
            vec![test]
        }
    };

    // Candidate feasibility that does not depend on the fold.
    let mut entries: Vec<CvEntry> = Vec::with_capacity(k_grid.len());
    let mut feasible: Vec<usize> = Vec::new();
    for &k in k_grid {
        if k < 1 || k > j {
            entries.push(CvEntry {
                k,
                cv: None,
                note: Some(format!("rank {k} outside 1..={j}")),
                folds_used: 0,
                folds_skipped: folds.len(),
            });
        } else if p > (s - 1).min(k) {
            entries.push(CvEntry {
                k,
                cv: None,
                note: Some(format!("p = {p} exceeds min(S - 1, k) = {}", (s - 1).min(k))),
                folds_used: 0,
                folds_skipped: folds.len(),
            });
        } else {
            feasible.push(entries.len());
            entries.push(CvEntry {
                k,
                cv: None,
                note: None,
                folds_used: 0,
                folds_skipped: 0,
            });
        }
    }
    if feasible.is_empty() {
        let notes: Vec<String> = entries
            .iter()
            .filter_map(|e| e.note.clone())
            .collect();
        return Err(Error::NoFeasibleRank {
            notes: notes.join("; "),
        });
    }

    // Per-fold squared errors, keyed (entry, fold), accumulated in fold order.
    let mut fold_errors: Vec<Vec<f64>> = vec![Vec::new(); entries.len()];
    for test in &folds {
        let train: Vec<usize> = (0..n).filter(|i| !test.contains(i)).collect();
        if train.len() <= s {
            for &e in &feasible {
                entries[e].folds_skipped += 1;
                entries[e].note = Some("training fold smaller than slice count".into());
            }
            continue;
        }
        let train_data = canon.select_rows(&train)?;
        let engine = match FitEngine::new(&train_data, s, policy) {
            Ok(engine) => engine,
            Err(err) => {
                for &e in &feasible {
                    entries[e].folds_skipped += 1;
                    entries[e].note = Some(format!("fold skipped: {err}"));
                }
                continue;
            }
        };
        let x_test = DMatrix::from_fn(test.len(), j, |r, c| canon.x()[(test[r], c)]);
        for &e in &feasible {
            let k = entries[e].k;
            match cv_fold_error(&engine, &train_data, k, p, policy, &x_test, test, &canon) {
                Ok(sq) => {
                    entries[e].folds_used += 1;
                    fold_errors[e].push(sq);
                }
                Err(err) => {
                    entries[e].folds_skipped += 1;
                    entries[e].note = Some(format!("fold skipped: {err}"));
                }
            }
        }
    }

    for &e in &feasible {
        if entries[e].folds_used > 0 {
            entries[e].cv = Some(fold_errors[e].iter().sum());
        }
    }

    // Argmin with ties toward smaller k (grid order after sorting by k).
    let mut order: Vec<usize> = feasible
        .iter()
        .copied()
        .filter(|&e| entries[e].cv.is_some())
        .collect();
    if order.is_empty() {
        let notes: Vec<String> = entries.iter().filter_map(|e| e.note.clone()).collect();
        return Err(Error::NoFeasibleRank {
            notes: notes.join("; "),
        });
    }
    order.sort_by_key(|&e| entries[e].k);
    let mut best = order[0];
    for &e in &order[1..] {
        if entries[e].cv.unwrap() < entries[best].cv.unwrap() {
            best = e;
        }
    }
    let k_star = entries[best].k;

    // Noise scale of a CV sum from the per-fold spread at the selected rank.
    let errs = &fold_errors[best];
    let noise_se = if errs.len() > 1 {
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        let var = errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>()
            / (errs.len() as f64 - 1.0);
        (var * errs.len() as f64).sqrt()
    } else {
        0.0
    };
    let cvs: Vec<f64> = order.iter().map(|&e| entries[e].cv.unwrap()).collect();
    let spread = cvs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - cvs.iter().cloned().fold(f64::INFINITY, f64::min);
    let significant_minimum = spread > 2.0 * noise_se;

    Ok(CvReport {
        entries,
        k_star,
        scheme,
        seed,
        noise_se,
        significant_minimum,
    })
}

fn cv_fold_error(
    engine: &FitEngine,
    train_data: &Dataset,
    k: usize,
    p: usize,
    policy: &RankPolicy,
    x_test: &DMatrix<f64>,
    test: &[usize],
    canon: &Dataset,
) -> Result<f64> {
    let fit = engine.directions(k, p, policy, false)?;
    let smoother = fit_smoother(&fit.xi_hat, train_data.y())?;
    let xi_test = predict_indices(&fit, x_test)?;
    let (y_hat, _) = predict_smoother(&smoother, &xi_test)?;
    let mut sq = 0.0;
    for (row, &i) in test.iter().enumerate() {
        let e = canon.y()[i] - y_hat[row];
        sq += e * e;
    }
    Ok(sq)
}

fn canonical_order_of(d: &Dataset) -> Vec<usize> {
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
