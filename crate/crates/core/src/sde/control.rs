//! Drift control fields `u(x, t)` with composable perturbation wrappers.

use std::fmt;
use std::sync::Arc;

/// Controls are evaluated with stack scratch buffers; this caps the
/// state dimension for composed fields.
pub const MAX_INLINE_DIM: usize = 64;

type FieldFn = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;

/// Where a control field came from. `Zero` is special-cased by the
/// simulator so that the Girsanov log-weight stays exactly `0.0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Zero,
    Analytic,
    PdeDerived,
    Composed,
}

/// A control `u(x, t) in R^d`, evaluated as
/// `multiplier * base(x, t) + perturbation(x, t)`.
#[derive(Clone)]
pub struct ControlField {
    dim: usize,
    base: FieldFn,
    multiplier: f64,
    perturbation: Option<FieldFn>,
    provenance: Provenance,
}

impl fmt::Debug for ControlField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlField")
            .field("dim", &self.dim)
            .field("multiplier", &self.multiplier)
            .field("perturbed", &self.perturbation.is_some())
            .field("provenance", &self.provenance)
            .finish()
    }
}

impl ControlField {
    /// The zero control; simulating under it reproduces the original law.
    pub fn zero(dim: usize) -> Self {
        assert!((1..=MAX_INLINE_DIM).contains(&dim));
        Self {
            dim,
            base: Arc::new(|_x, _t, out| out.fill(0.0)),
            multiplier: 1.0,
            perturbation: None,
            provenance: Provenance::Zero,
        }
    }

    /// Field from a closure writing `u(x, t)` into `out`.
    pub fn from_fn<F>(dim: usize, provenance: Provenance, f: F) -> Self
    where
        F: Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
    {
        assert!((1..=MAX_INLINE_DIM).contains(&dim));
        Self {
            dim,
            base: Arc::new(f),
            multiplier: 1.0,
            perturbation: None,
            provenance,
        }
    }

    /// Constant-in-space-and-time field.
    pub fn constant(values: Vec<f64>) -> Self {
        let dim = values.len();
        Self::from_fn(dim, Provenance::Analytic, move |_x, _t, out| {
            out.copy_from_slice(&values)
        })
    }

    /// Purely time-dependent field tabulated on a uniform time grid
    /// (`values[j]` at `t = j * dt`); evaluation snaps to the nearest
    /// grid index. Exact when the simulator steps on the same grid.
    pub fn time_table(values: Vec<Vec<f64>>, dt: f64) -> Self {
        assert!(!values.is_empty() && dt > 0.0);
        let dim = values[0].len();
        let n = values.len();
        let flat: Vec<f64> = values.into_iter().flatten().collect();
        assert_eq!(flat.len(), n * dim);
        Self::from_fn(dim, Provenance::Analytic, move |_x, t, out| {
            let j = ((t / dt).round() as usize).min(n - 1);
            out.copy_from_slice(&flat[j * dim..(j + 1) * dim]);
        })
    }

    /// Scalar field on a 1-D space-time grid, evaluated with bilinear
    /// interpolation and clamped to the grid edges. Used to turn a PDE
    /// solution slice into a control the simulator can query anywhere.
    pub fn grid_table_1d(
        table: Vec<f64>, // (nt + 1) x nx, time-major
        nx: usize,
        x_min: f64,
        dx: f64,
        dt: f64,
        provenance: Provenance,
    ) -> Self {
        assert!(nx >= 2 && table.len().is_multiple_of(nx));
        let nt_slices = table.len() / nx;
        let table = Arc::new(table);
        Self::from_fn(1, provenance, move |x, t, out| {
            let fx = ((x[0] - x_min) / dx).clamp(0.0, (nx - 1) as f64);
            let ft = (t / dt).clamp(0.0, (nt_slices - 1) as f64);
            let i0 = (fx as usize).min(nx - 2);
            let j0 = (ft as usize).min(nt_slices.saturating_sub(2));
            let wx = fx - i0 as f64;
            let wt = if nt_slices == 1 { 0.0 } else { ft - j0 as f64 };
            let j1 = (j0 + 1).min(nt_slices - 1);
            let v00 = table[j0 * nx + i0];
            let v01 = table[j0 * nx + i0 + 1];
            let v10 = table[j1 * nx + i0];
            let v11 = table[j1 * nx + i0 + 1];
            let v0 = v00 + wx * (v01 - v00);
            let v1 = v10 + wx * (v11 - v10);
            out[0] = v0 + wt * (v1 - v0);
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// True when evaluation is identically zero by construction.
    pub fn is_zero(&self) -> bool {
        self.provenance == Provenance::Zero && self.perturbation.is_none()
    }

    /// Multiplicative perturbation `zeta * u`.
    pub fn scaled(mut self, zeta: f64) -> Self {
        if self.perturbation.is_none() {
            self.multiplier *= zeta;
            if self.provenance != Provenance::Zero {
                self.provenance = Provenance::Composed;
            }
            self
        } else {
            let inner = self.clone();
            let dim = self.dim;
            let mut wrapped = Self::from_fn(dim, Provenance::Composed, move |x, t, out| {
                inner.evaluate(x, t, out)
            });
            wrapped.multiplier = zeta;
            wrapped
        }
    }

    /// Additive perturbation from a closure.
    pub fn with_additive<F>(self, f: F) -> Self
    where
        F: Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
    {
        self.with_additive_arc(Arc::new(f))
    }

    /// Additive constant perturbation (`u + eps` with a fixed vector).
    pub fn plus_constant(self, eps: Vec<f64>) -> Self {
        assert_eq!(eps.len(), self.dim);
        self.with_additive(move |_x, _t, out| {
            for (o, e) in out.iter_mut().zip(&eps) {
                *o = *e;
            }
        })
    }

    /// Sum of another field.
    pub fn plus(self, other: &ControlField) -> Self {
        assert_eq!(self.dim, other.dim);
        let other = other.clone();
        self.with_additive(move |x, t, out| other.evaluate(x, t, out))
    }

    fn with_additive_arc(mut self, f: FieldFn) -> Self {
        self.perturbation = Some(match self.perturbation.take() {
            None => f,
            Some(prev) => {
                let dim = self.dim;
                Arc::new(move |x: &[f64], t: f64, out: &mut [f64]| {
                    prev(x, t, out);
                    let mut buf = [0.0f64; MAX_INLINE_DIM];
                    f(x, t, &mut buf[..dim]);
                    for (o, b) in out.iter_mut().zip(&buf[..dim]) {
                        *o += *b;
                    }
                })
            }
        });
        self.provenance = Provenance::Composed;
        self
    }

    /// Linear combination `sum_j coeff_j * field_j`, e.g. `u + 2 delta`.
    pub fn affine(terms: Vec<(f64, ControlField)>) -> Self {
        assert!(!terms.is_empty());
        let dim = terms[0].1.dim;
        assert!(terms.iter().all(|(_, f)| f.dim == dim));
        Self::from_fn(dim, Provenance::Composed, move |x, t, out| {
            out.fill(0.0);
            let mut buf = [0.0f64; MAX_INLINE_DIM];
            for (c, f) in &terms {
                f.evaluate(x, t, &mut buf[..dim]);
                for (o, b) in out.iter_mut().zip(&buf[..dim]) {
                    *o += c * *b;
                }
            }
        })
    }

    /// Writes `multiplier * base(x, t) + perturbation(x, t)` into `out`.
    pub fn evaluate(&self, x: &[f64], t: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        (self.base)(x, t, out);
        if self.multiplier != 1.0 {
            for v in out.iter_mut() {
                *v *= self.multiplier;
            }
        }
        if let Some(p) = &self.perturbation {
            let mut buf = [0.0f64; MAX_INLINE_DIM];
            p(x, t, &mut buf[..self.dim]);
            for (o, b) in out.iter_mut().zip(&buf[..self.dim]) {
                *o += *b;
            }
        }
    }

    /// Convenience scalar evaluation for 1-D fields.
    pub fn evaluate_scalar(&self, x: f64, t: f64) -> f64 {
        debug_assert_eq!(self.dim, 1);
        let mut out = [0.0];
        self.evaluate(&[x], t, &mut out);
        out[0]
    }
}
