//! Controlled SDE simulation with Euler-Maruyama stepping and
//! exact-in-discretization Girsanov log-weights.
//!
//! The uncontrolled dynamics is `dX = b(X, t) dt + sigma(X, t) dW`; a
//! control `u` shifts the drift to `b + sigma u`. Along a controlled
//! path driven by increments `dW`, the likelihood ratio against the
//! uncontrolled law accumulates as
//!
//! ```text
//! log dP/dP^u = sum_k ( -u_k . dW_k - |u_k|^2 dt / 2 )
//! ```
//!
//! using the same increments that drove the path, which makes the
//! reweighting exactly unbiased for the discrete-time dynamics.
//!
//! Reproducibility contract: path `i` draws from a counter-based
//! substream derived from `(seed, i)`, so results are bit-identical for
//! a fixed `(seed, k, grid)` regardless of how paths are scheduled
//! across worker threads.

mod control;
mod model;
mod simulate;

pub use control::{ControlField, Provenance, MAX_INLINE_DIM};
pub use model::{CostFunctional, Diffusion, SdeModel};
pub use simulate::{brownian_exit_simulate, simulate_controlled, ExitControl, SimOptions};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdeError {
    #[error("path {path} produced a non-finite state at step {step} (t = {t:.6})")]
    BlowUp { path: usize, step: usize, t: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
    #[error("invalid stopping specification: {0}")]
    InvalidStopping(&'static str),
    #[error("invalid time grid: {0}")]
    InvalidGrid(&'static str),
    #[error("diffusion matrix is not invertible at the initial state")]
    NonInvertibleDiffusion,
    #[error("drift or diffusion returned a non-finite value at the initial state")]
    NonFiniteCoefficient,
    #[error("path storage is only supported for fixed-horizon runs")]
    PathStorageUnsupported,
    #[error("sample count must be at least 1")]
    EmptyBatch,
}

/// Uniform discretization of `[0, T]` into `n_steps` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    n_steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self, SdeError> {
        if n_steps == 0 {
            return Err(SdeError::InvalidGrid("n_steps must be >= 1"));
        }
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(SdeError::InvalidGrid("horizon must be positive and finite"));
        }
        let dt = horizon / n_steps as f64;
        let grid = Self { n_steps, dt };
        debug_assert!((grid.horizon() - horizon).abs() <= 1e-12 * horizon.abs());
        Ok(grid)
    }

    /// Grid from a target step size; `n_steps` is the rounded quotient.
    pub fn from_dt(horizon: f64, dt: f64) -> Result<Self, SdeError> {
        if dt.is_nan() || dt <= 0.0 || dt > horizon {
            return Err(SdeError::InvalidGrid("dt must lie in (0, horizon]"));
        }
        Self::new(horizon, (horizon / dt).round().max(1.0) as usize)
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.n_steps as f64
    }
}

/// When a simulated path ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoppingSpec {
    /// Run every path for the full time grid.
    FixedHorizon,
    /// Stop a path when it first leaves the open interval `(a, b)`
    /// (1-D only). Paths still inside at `time_cap` are reported as
    /// incomplete rather than silently truncated.
    FirstExit { a: f64, b: f64, time_cap: f64 },
}

/// Summary functionals of `k` simulated paths.
///
/// Vectors are indexed by path. `log_girsanov[i]` is `log dP/dP^u`
/// along path `i`; it is exactly `0.0` for the zero control. The
/// auxiliary accumulators hold `int |a(X_s, s)|^2 ds` and
/// `int a(X_s, s) . dW_s` for a caller-supplied field `a` (see
/// [`SimOptions::aux`]).
#[derive(Debug, Clone)]
pub struct PathBatch {
    pub k: usize,
    pub running_cost: Vec<f64>,
    pub terminal_cost: Vec<f64>,
    pub log_girsanov: Vec<f64>,
    pub exit_time: Option<Vec<f64>>,
    pub aux_sq_integral: Option<Vec<f64>>,
    pub aux_brownian_integral: Option<Vec<f64>>,
    /// Flattened `(k, n_steps + 1, dim)` state history; populated only
    /// on request, summary functionals are the default.
    pub stored_paths: Option<Vec<f64>>,
    /// Indices of paths that hit the time cap before exiting.
    pub incomplete: Vec<usize>,
}

impl PathBatch {
    pub fn is_complete(&self) -> bool {
        self.incomplete.is_empty()
    }

    /// Per-path log importance weight `-running - terminal + log dP/dP^u`.
    pub fn log_weight(&self, i: usize) -> f64 {
        -self.running_cost[i] - self.terminal_cost[i] + self.log_girsanov[i]
    }
}
