//! Reconstruction of the zero-order coefficient `q` in the semilinear
//! elliptic equation `-div(sigma grad u) + q u^m = f` (homogeneous
//! Dirichlet data, odd `m`) from noisy interior observations of the state.
//!
//! The pieces, bottom up:
//!
//! - [`mesh`], [`quadrature`], [`fe`]: uniform P1 discretization of the
//!   unit interval and unit square;
//! - [`sparse`], [`linsolve`], [`assembly`]: operators, projections,
//!   quasi-interpolation, and discrete norms;
//! - [`forward`]: Newton solver for the discrete state equation;
//! - [`inverse`]: box-constrained Tikhonov least squares with adjoint
//!   gradients and a projected limited-memory BFGS;
//! - [`experiments`]: manufactured benchmark cases, calibrated noise,
//!   refinement studies, and CSV/SVG/table emission;
//! - [`stability`]: numerical probes of the boundary lower bound, the
//!   conditional stability quotient, and the power-difference identity.

pub mod assembly;
pub mod coefficient;
pub mod error;
pub mod experiments;
pub mod fe;
pub mod forward;
pub mod inverse;
pub mod linsolve;
pub mod mesh;
pub mod quadrature;
pub mod sparse;
pub mod stability;

pub use assembly::{
    apply_dirichlet, assemble_load, assemble_mass, assemble_stiffness, diff_norm, fe_norm,
    l2_project, quasi_interpolate, ritz_project, NormKind,
};
pub use coefficient::{Coefficient, Diffusion, Field};
pub use error::{Error, Result};
pub use experiments::{
    emit_report, generate_noisy_data, make_case, make_case_with_exponent, run_study, Coupling,
    ManufacturedCase, ReportFormat, StudyOptions, StudyRecord,
};
pub use fe::{FeFunction, Space};
pub use forward::{solve_forward, solve_linearized, ForwardProblem, NewtonReport, SolverControls};
pub use inverse::{InverseProblem, OptimizerOptions, ReconstructionResult};
pub use mesh::Mesh;
pub use quadrature::QuadratureRule;
pub use sparse::CsrMatrix;
pub use stability::{
    check_lower_bound, scan_stability, verify_power_difference_identity, ExponentFit, ScanSetup,
    StabilitySample,
};
