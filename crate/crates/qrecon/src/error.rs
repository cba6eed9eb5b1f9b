use thiserror::Error;

use crate::forward::NewtonReport;

/// Errors produced by meshing, assembly, and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh needs at least 2 subdivisions per side, got {0}")]
    MeshTooCoarse(usize),

    #[error("unsupported mesh dimension {0} (only 1 and 2)")]
    UnsupportedDimension(usize),

    #[error("point {point:?} lies outside the closed domain")]
    PointOutsideDomain { point: Vec<f64> },

    #[error("diffusion coefficient loses ellipticity at {point:?} (smallest eigenvalue {value:.3e})")]
    EllipticityViolation { point: Vec<f64>, value: f64 },

    #[error("index {index} out of range for {what} of length {len}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("closed-form field used where a gradient is required, but none was supplied")]
    MissingGradient,

    #[error("linear solve failed: relative residual {residual:.3e} exceeds {tolerance:.3e}")]
    LinearSolveFailure { residual: f64, tolerance: f64 },

    #[error("conjugate gradient detected non-positive curvature; system is not positive definite")]
    IndefiniteSystem,

    #[error("reaction coefficient must be nonnegative, found {value:.3e} at {point:?}")]
    NegativeCoefficient { point: Vec<f64>, value: f64 },

    #[error("nonlinearity exponent must be an odd natural number, got {0}")]
    EvenExponent(u32),

    #[error("Newton iteration did not converge within {max_iter} steps (last relative residual {last_residual:.3e})")]
    NewtonDidNotConverge {
        max_iter: usize,
        last_residual: f64,
        report: NewtonReport,
    },

    #[error("unknown manufactured case '{0}' (expected \"a\" or \"b\")")]
    UnknownCase(String),

    #[error("fine mesh too coarse for the stability scan: smallest state misfit {misfit:.3e} < 10 h^2 = {bound:.3e}; increase fine_n_sub")]
    FineMeshTooCoarse { misfit: f64, bound: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
