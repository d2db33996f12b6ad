//! Sufficient dimension reduction for functional predictors observed on a
//! finite grid.
//!
//! Given samples `(x_i, y_i)` where each `x_i` is a curve evaluated at `J`
//! shared grid points, the estimator slices the response, forms the
//! between-slice moment matrix on a rank-`k` truncation of the sample
//! covariance, and extracts direction coefficients from the resulting
//! eigenproblem. The crate is organized as:
//!
//! * [`spectral`] — symmetric eigendecompositions, generalized matrix powers,
//!   Moore–Penrose pseudoinverses, top-k projections and eigengaps;
//! * [`rkhs`] — covariance kernels, Gram matrices and the finite-grid
//!   reproducing-kernel inner products/projections the estimator relies on;
//! * [`sir`] — centering, slicing, the sliced-inverse-regression matrix and
//!   the direction estimator itself;
//! * [`link`] — Nadaraya–Watson link smoothing and cross-validated rank
//!   selection;
//! * [`simgen`] — seeded generators for Brownian / fractional Gaussian
//!   designs and synthetic index models.

pub mod error;
pub mod link;
pub mod rkhs;
pub mod simgen;
pub mod sir;
pub mod spectral;
pub mod warning;

pub use error::{Error, ErrorKind, Result};
pub use link::{CvEntry, CvReport, CvScheme, SmootherModel};
pub use rkhs::{GridFunction, KernelSpec};
pub use simgen::{LinkKind, SimConfig, SimModel, SimOutput};
pub use sir::{Dataset, SirFit, SliceStrategy, SliceSummary};
pub use spectral::{RankPolicy, SpectralDecomp, SymMatrix};
pub use warning::Warning;
