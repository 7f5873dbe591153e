//! Cubic regularized Newton methods that work in low-dimensional subspaces.
//!
//! The crate provides the full-dimensional method (CRN), a random coordinate
//! variant (SSCN) and a Krylov-subspace variant built on the Lanczos process,
//! together with the linear algebra they need and spectral diagnostics for the
//! constant `rho^(m)(H, g)` that governs the Krylov variant's convergence.
//!
//! ```
//! use subspace_crn::objectives::{make_quadratic, QuadraticSpec, Spectrum};
//! use subspace_crn::solvers::{run, Method, SolverConfig};
//!
//! let mut f = make_quadratic(&QuadraticSpec {
//!     spectrum: Spectrum::Interval { dim: 50, lo: 0.1, hi: 10.0 },
//!     rotate: true,
//!     f_star: 0.0,
//!     seed: 1,
//! })
//! .unwrap();
//! let result = run(&mut f, &vec![0.0; 50], &SolverConfig::new(Method::KrylovCrn, 5)).unwrap();
//! assert!(result.state.grad_norm <= 1e-9);
//! ```

pub mod cubic;
pub mod lanczos;
pub mod linalg;
pub mod objectives;
pub mod solvers;
pub mod spectral;

pub use cubic::{solve_cubic, CubicModel, CubicOptions, CubicSolution, ModelHessian};
pub use lanczos::{lanczos, LanczosBasis};
pub use linalg::{DenseMatrix, LinearOperator, SparseMatrixCsr, TridiagonalMatrix};
pub use objectives::{Dataset, LogisticObjective, Objective, QuadraticObjective};
pub use solvers::{run, Method, RunResult, SolverConfig, TraceRecord};
