//! Scenario-based robust resource allocation solved by ADMM, with a
//! closed-form quartic minimizer as the per-cell kernel.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix `f64`.
//!
//! ```
//! use qadmm::model::Quadratic;
//! use qadmm::{solve, Config, Dims, Problem, SolveStatus};
//!
//! // one resource, two steps, one scenario
//! let mut p = Problem::zeros(Dims::new(1, 2, 1));
//! p.hi = vec![10.0, 10.0];
//! p.demand = vec![3.0, 4.0];
//! p.cost.set(0, Quadratic::new(1.0, 0.0, 0.0));
//! p.cost.set(1, Quadratic::new(1.0, 0.0, 0.0));
//!
//! let sol = solve(&p, &Config::new(1e-8, 1e-6))?;
//! assert_eq!(sol.status, SolveStatus::Converged);
//! assert!((sol.x1[0] - 3.0).abs() < 1e-6);
//! # Ok::<(), qadmm::AdmmError>(())
//! ```

pub mod admm;
pub mod backend;
pub mod model;
pub mod phev;
pub mod quartic;
pub mod rng;
pub mod scalar;

pub use admm::{solve, solve_warm, solve_with_executor, AdmmError, PenaltyParams, SolverConfig, SolverState, WarmStart};
pub use backend::{Backend, BackendKind, Executor};
pub use model::{AllocationProblem, Dims, Quadratic, Solution, SolveStatus, Trajectories};
pub use scalar::Scalar;

pub type Problem = AllocationProblem<f64>;
pub type Config = SolverConfig<f64>;
pub type Coeffs = quartic::QuarticCoeffs<f64>;
