//! SDE coefficients and path cost functionals.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::SdeError;

type DriftFn = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;
type SigmaFn = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;
type RunningFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;
type TerminalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Diffusion coefficient `sigma(x, t)`. The constant variants avoid a
/// matrix evaluation per step, which dominates tight simulation loops.
#[derive(Clone)]
pub enum Diffusion {
    /// `s * I`.
    Scalar(f64),
    /// Constant matrix.
    Matrix(DMatrix<f64>),
    /// General coefficient writing the `d x d` matrix (column-major)
    /// into the provided buffer.
    StateDependent(SigmaFn),
}

impl fmt::Debug for Diffusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diffusion::Scalar(s) => write!(f, "Diffusion::Scalar({s})"),
            Diffusion::Matrix(m) => write!(f, "Diffusion::Matrix({}x{})", m.nrows(), m.ncols()),
            Diffusion::StateDependent(_) => write!(f, "Diffusion::StateDependent"),
        }
    }
}

impl Diffusion {
    /// `out += sigma(x, t) v`; `scratch` must hold `d * d` elements and
    /// is only touched by the state-dependent variant.
    #[inline]
    pub(crate) fn apply_add(
        &self,
        x: &[f64],
        t: f64,
        v: &[f64],
        out: &mut [f64],
        scratch: &mut [f64],
    ) {
        let d = v.len();
        match self {
            Diffusion::Scalar(s) => {
                for i in 0..d {
                    out[i] += s * v[i];
                }
            }
            Diffusion::Matrix(m) => {
                let mm = m.as_slice(); // column-major
                for j in 0..d {
                    let vj = v[j];
                    let col = &mm[j * d..(j + 1) * d];
                    for i in 0..d {
                        out[i] += col[i] * vj;
                    }
                }
            }
            Diffusion::StateDependent(f) => {
                f(x, t, scratch);
                for j in 0..d {
                    let vj = v[j];
                    let col = &scratch[j * d..(j + 1) * d];
                    for i in 0..d {
                        out[i] += col[i] * vj;
                    }
                }
            }
        }
    }

    fn invertible_at(&self, x: &[f64], t: f64, dim: usize) -> bool {
        let m = match self {
            Diffusion::Scalar(s) => return s.is_finite() && *s != 0.0,
            Diffusion::Matrix(m) => m.clone(),
            Diffusion::StateDependent(f) => {
                let mut buf = vec![0.0; dim * dim];
                f(x, t, &mut buf);
                DMatrix::from_column_slice(dim, dim, &buf)
            }
        };
        if m.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let svd = m.svd(false, false);
        let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
        let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
        smin > 0.0 && (smax / smin).is_finite()
    }
}

/// Drift, diffusion, initial condition and horizon of the dynamics.
#[derive(Clone)]
pub struct SdeModel {
    dim: usize,
    x_init: Vec<f64>,
    horizon: f64,
    drift: DriftFn,
    diffusion: Diffusion,
}

impl fmt::Debug for SdeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeModel")
            .field("dim", &self.dim)
            .field("x_init", &self.x_init)
            .field("horizon", &self.horizon)
            .field("diffusion", &self.diffusion)
            .finish()
    }
}

impl SdeModel {
    /// Validates that the coefficients are finite at the initial state
    /// and that the diffusion has a finite condition number there.
    pub fn new<F>(
        x_init: Vec<f64>,
        horizon: f64,
        drift: F,
        diffusion: Diffusion,
    ) -> Result<Self, SdeError>
    where
        F: Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
    {
        let dim = x_init.len();
        if dim == 0 {
            return Err(SdeError::DimensionMismatch("state dimension must be >= 1"));
        }
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(SdeError::InvalidGrid("horizon must be positive and finite"));
        }
        let mut probe = vec![0.0; dim];
        drift(&x_init, 0.0, &mut probe);
        if probe.iter().any(|v| !v.is_finite()) || x_init.iter().any(|v| !v.is_finite()) {
            return Err(SdeError::NonFiniteCoefficient);
        }
        if !diffusion.invertible_at(&x_init, 0.0, dim) {
            return Err(SdeError::NonInvertibleDiffusion);
        }
        Ok(Self {
            dim,
            x_init,
            horizon,
            drift: Arc::new(drift),
            diffusion,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn x_init(&self) -> &[f64] {
        &self.x_init
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    #[inline]
    pub(crate) fn drift_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        (self.drift)(x, t, out)
    }

    pub(crate) fn diffusion(&self) -> &Diffusion {
        &self.diffusion
    }

    /// Re-target the horizon (the coefficients are unchanged).
    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }
}

/// Path functional `W(X) = int f(X_s, s) ds + g(X_T)`.
#[derive(Clone)]
pub struct CostFunctional {
    running: Option<RunningFn>,
    terminal: Option<TerminalFn>,
}

impl fmt::Debug for CostFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "CostFunctional {{ running: {}, terminal: {} }}",
            self.running.is_some(),
            self.terminal.is_some()
        )
    }
}

impl CostFunctional {
    /// `W = 0`.
    pub fn zero() -> Self {
        Self {
            running: None,
            terminal: None,
        }
    }

    pub fn new<F, G>(f: F, g: G) -> Self
    where
        F: Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            running: Some(Arc::new(f)),
            terminal: Some(Arc::new(g)),
        }
    }

    pub fn terminal_only<G>(g: G) -> Self
    where
        G: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            running: None,
            terminal: Some(Arc::new(g)),
        }
    }

    pub fn running_only<F>(f: F) -> Self
    where
        F: Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            running: Some(Arc::new(f)),
            terminal: None,
        }
    }

    /// Constant running cost `f = c` (e.g. `c = 1` makes `W` the elapsed time).
    pub fn constant_running(c: f64) -> Self {
        Self::running_only(move |_x, _t| c)
    }

    #[inline]
    pub(crate) fn running_at(&self, x: &[f64], t: f64) -> f64 {
        match &self.running {
            Some(f) => f(x, t),
            None => 0.0,
        }
    }

    #[inline]
    pub(crate) fn terminal_at(&self, x: &[f64]) -> f64 {
        match &self.terminal {
            Some(g) => g(x),
            None => 0.0,
        }
    }

    pub(crate) fn has_running(&self) -> bool {
        self.running.is_some()
    }
}
