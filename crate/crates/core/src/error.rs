//! Error type shared by every module of the crate.

use thiserror::Error;

/// Coarse classification used by callers (for instance to pick an exit code).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// The caller passed an argument that can never be valid.
    Argument,
    /// The data violate a stated precondition (shape, finiteness, domain).
    Data,
    /// A numerical procedure failed or produced an undefined quantity.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix asymmetry {asymmetry:.3e} exceeds relative tolerance {tol:.3e}")]
    Asymmetric { asymmetry: f64, tol: f64 },

    #[error("matrix of dimension {dim} is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPsd { dim: usize, min_eig: f64 },

    #[error("eigendecomposition failed to converge for a {dim}x{dim} matrix")]
    EigenFailure { dim: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("rank index {k} out of range 1..={dim}")]
    RankOutOfRange { k: usize, dim: usize },

    #[error("eigengap undefined: all eigenvalues are equal")]
    UndefinedEigengap,

    #[error("invalid rank policy: rel_tol must lie in (0,1) and abs_floor must be >= 0")]
    InvalidRankPolicy,

    #[error("function is not in the range of the kernel matrix (residual {residual:.3e} > {tol:.3e} * norm)")]
    NotInRange { residual: f64, tol: f64 },

    #[error("degenerate direction: quadratic form a'Ka = {value:.3e} is numerically zero")]
    DegenerateDirection { value: f64 },

    #[error("point {point} is not on the tabulated kernel grid")]
    OffGrid { point: f64 },

    #[error("kernel parameter out of range: {what}")]
    KernelParameter { what: String },

    #[error("grid must be strictly increasing (violated at index {index})")]
    GridNotIncreasing { index: usize },

    #[error("invalid dataset: {what}")]
    InvalidDataset { what: String },

    #[error("slice {slice} is empty (every slice must have positive probability)")]
    EmptySlice { slice: usize },

    #[error("response value {value} at row {row} lies outside the slice boundaries")]
    ResponseOutsideBoundaries { row: usize, value: f64 },

    #[error("invalid argument: {what}")]
    InvalidArgument { what: String },

    #[error("covariance matrix has numerical rank 0; no direction can be estimated")]
    ZeroRankCovariance,

    #[error("no feasible rank in the cross-validation grid: {notes}")]
    NoFeasibleRank { notes: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

impl Error {
    /// Classify the error for exit-code style handling.
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            RankOutOfRange { .. }
            | InvalidRankPolicy
            | InvalidArgument { .. }
            | KernelParameter { .. }
            | LengthMismatch { .. } => ErrorKind::Argument,
            NonFinite
            | NotSquare { .. }
            | Asymmetric { .. }
            | GridNotIncreasing { .. }
            | InvalidDataset { .. }
            | OffGrid { .. }
            | EmptySlice { .. }
            | ResponseOutsideBoundaries { .. }
            | DimensionMismatch { .. } => ErrorKind::Data,
            NotPsd { .. }
            | EigenFailure { .. }
            | UndefinedEigengap
            | NotInRange { .. }
            | DegenerateDirection { .. }
            | ZeroRankCovariance
            | NoFeasibleRank { .. } => ErrorKind::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
