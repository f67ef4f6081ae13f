//! Importance sampling diagnostics for diffusion path functionals.
//!
//! The central object of study is the relative error of an importance
//! sampling estimator for `Z = E[exp(-W(X))]`, where `X` is either a
//! finite-dimensional random variable or the solution of an SDE and `W`
//! accumulates a running and a terminal cost along the path. Sampling
//! from a proposal measure and reweighting with the likelihood ratio is
//! unbiased, but the relative error reacts exponentially to the gap
//! between the proposal and the (zero-variance) optimal one.
//!
//! The crate is organized along that pipeline:
//!
//! - [`measures`]: finite-dimensional divergences (Gaussian KL and chi^2
//!   closed forms, gridded densities, Pareto tails) and the divergence
//!   bounds on the relative error.
//! - [`sde`]: Euler-Maruyama simulation of controlled diffusions with
//!   exact-in-discretization Girsanov log-weights, for fixed horizons
//!   and first-exit stopping.
//! - [`estimators`]: batch statistics - the importance sampling
//!   estimate, relative error, chi^2 and path-KL estimates, effective
//!   sample size, bootstrap error bars.
//! - [`bounds`]: exact relative-error formulas and envelope/Hoelder
//!   bounds on path space, including the stopping-time variants.
//! - [`pde`]: 1-D finite-difference solvers for the backward equations
//!   that produce optimal controls and relative-error fields.
//! - [`harness`]: named, configured experiments with deterministic
//!   seeding and CSV/JSON output, consumed by the `pathweight` CLI.

pub mod bounds;
pub mod estimators;
pub mod harness;
pub mod measures;
pub mod pde;
pub mod sde;
pub(crate) mod util;

pub use bounds::{BoundKind, BoundReport, DeltaEnvelope};
pub use estimators::IsEstimate;
pub use measures::{GaussianMeasure, GriddedDensity1D, ParetoDensity};
pub use pde::{Grid1D, PdeSolution, SolutionKind};
pub use sde::{
    ControlField, CostFunctional, PathBatch, Provenance, SdeModel, SimOptions, StoppingSpec,
    TimeGrid,
};
