//! Non-fatal conditions surfaced alongside results.
//!
//! Several estimators are still well defined when an assumption is shaky
//! (a tied eigenvalue at the truncation cut, a rank-deficient covariance,
//! a constant response). Those cases degrade loudly: the computation
//! proceeds and a [`Warning`] travels with the result.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// The eigengap at the truncation cut is below the rank-policy threshold,
    /// so the top-k eigenspace is not numerically well separated.
    EigengapTie { k: usize, gap: f64, threshold: f64 },
    /// The second kernel does not dominate the first (min eigenvalue of
    /// K2 - K1 is negative beyond tolerance).
    DominanceViolated { min_eig: f64 },
    /// Requested rank exceeded the numerical rank; the effective rank used.
    ReducedRank { requested: usize, effective: usize },
    /// The response is constant; slicing carries no information.
    DegenerateResponse,
    /// A smoother coordinate had zero variance; its bandwidth was floored.
    BandwidthFloored { coordinate: usize },
    /// A query fell so far from the training set that every kernel weight
    /// underflowed; the nearest training response was returned.
    FarQueryFallback { row: usize },
    /// A slightly negative eigenvalue of a covariance factor was clipped to 0.
    ClippedEigenvalue { index: usize, value: f64 },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::EigengapTie { k, gap, threshold } => write!(
                f,
                "eigengap at cut k={k} is {gap:.3e} < threshold {threshold:.3e}; truncation is not well separated"
            ),
            Warning::DominanceViolated { min_eig } => write!(
                f,
                "dominance violated: min eigenvalue of K2 - K1 is {min_eig:.3e}"
            ),
            Warning::ReducedRank { requested, effective } => write!(
                f,
                "requested rank {requested} exceeds numerical rank; using {effective}"
            ),
            Warning::DegenerateResponse => {
                write!(f, "response is constant; slices carry no information")
            }
            Warning::BandwidthFloored { coordinate } => write!(
                f,
                "coordinate {coordinate} has zero variance; bandwidth floored"
            ),
            Warning::FarQueryFallback { row } => write!(
                f,
                "query row {row} is far from the training set; nearest response used"
            ),
            Warning::ClippedEigenvalue { index, value } => write!(
                f,
                "eigenvalue {index} = {value:.3e} clipped to 0 in covariance factor"
            ),
        }
    }
}
