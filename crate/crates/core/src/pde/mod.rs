//! 1-D finite-difference solvers for the backward equations behind
//! optimal controls and relative-error fields.
//!
//! All solvers share one scheme: implicit Euler in time (unconditionally
//! stable), centered second-order differences in space, and either
//! zero-flux (reflecting) or fixed-value lateral boundaries. Nonlinear
//! HJB equations are handled through the exponential transform
//! `V = -eta log psi`, which turns them into linear equations whose
//! discretization preserves positivity.

mod solvers;
mod tridiag;

pub use solvers::{
    hitting_closedform, smallnoise_v0, solve_h_field, solve_hjb_smallnoise, solve_psi_backward,
    solve_psi_backward_with, solve_second_moment, Boundary, HittingSolution, SmallNoiseV0,
};

use std::io::{self, Write};

use thiserror::Error;

use crate::sde::{ControlField, Provenance};
use crate::util::fmt_g17;

#[derive(Debug, Error)]
pub enum PdeError {
    #[error("invalid grid: {0}")]
    InvalidGrid(&'static str),
    #[error("PDE solvers are one-dimensional; the model has d = {0}")]
    NotOneDimensional(usize),
    #[error("{kind} field lost positivity at x = {x:.4}, t = {t:.4} (value {value:.3e}); the grid or boundary treatment is inadequate")]
    PositivityLost {
        kind: &'static str,
        x: f64,
        t: f64,
        value: f64,
    },
    #[error("h-field dropped below 1 at x = {x:.4}, t = {t:.4} (value {value}); refine the grid")]
    HFieldBelowOne { x: f64, t: f64, value: f64 },
    #[error("terminal data underflowed to zero; the grid cannot resolve the requested noise level")]
    TerminalUnderflow,
}

/// Uniform space-time grid for the backward solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub nt: usize,
    pub t_final: f64,
}

impl Grid1D {
    pub fn new(
        x_min: f64,
        x_max: f64,
        nx: usize,
        nt: usize,
        t_final: f64,
    ) -> Result<Self, PdeError> {
        if x_min.partial_cmp(&x_max) != Some(std::cmp::Ordering::Less) {
            return Err(PdeError::InvalidGrid("x_min must be < x_max"));
        }
        if nx < 3 {
            return Err(PdeError::InvalidGrid("nx must be >= 3"));
        }
        if nt < 1 {
            return Err(PdeError::InvalidGrid("nt must be >= 1"));
        }
        if t_final.is_nan() || t_final <= 0.0 {
            return Err(PdeError::InvalidGrid("t_final must be positive"));
        }
        Ok(Self {
            x_min,
            x_max,
            nx,
            nt,
            t_final,
        })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.nt as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    /// Whether an explicit scheme would satisfy the parabolic CFL bound
    /// `dt <= dx^2 / (2 max sigma^2)`. The solvers here are implicit
    /// and do not require it; the check exists for diagnostics.
    pub fn explicit_cfl_ok(&self, max_sigma_sq: f64) -> bool {
        self.dt() <= self.dx() * self.dx() / (2.0 * max_sigma_sq)
    }

    /// Grid with both spacings halved (`nx -> 2 nx - 1`, `nt -> 2 nt`);
    /// used by convergence checks.
    pub fn refined(&self) -> Self {
        Self {
            nx: 2 * self.nx - 1,
            nt: 2 * self.nt,
            ..*self
        }
    }
}

/// What a solved field represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolutionKind {
    /// `psi(x, t) = E[exp(-W) | X_t = x]`, strictly positive.
    Psi,
    /// A value function `V = -eta log psi`.
    ValueV,
    /// The control-dependent second moment `M_u`.
    SecondMoment,
    /// The moment ratio `h_u = M_u / psi^2`, at least 1.
    HField,
}

/// A space-time scalar field on a [`Grid1D`], time-major: entry
/// `j * nx + i` holds the value at `(x_i, t_j)`, `t_j = j dt`.
#[derive(Debug, Clone)]
pub struct PdeSolution {
    grid: Grid1D,
    kind: SolutionKind,
    field: Vec<f64>,
    control_table: Option<Vec<f64>>,
}

impl PdeSolution {
    pub(crate) fn new(
        grid: Grid1D,
        kind: SolutionKind,
        field: Vec<f64>,
        control_table: Option<Vec<f64>>,
    ) -> Self {
        debug_assert_eq!(field.len(), (grid.nt + 1) * grid.nx);
        Self {
            grid,
            kind,
            field,
            control_table,
        }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn kind(&self) -> SolutionKind {
        self.kind
    }

    pub fn field(&self) -> &[f64] {
        &self.field
    }

    /// Field values at time index `j`.
    pub fn slice(&self, j: usize) -> &[f64] {
        &self.field[j * self.grid.nx..(j + 1) * self.grid.nx]
    }

    /// Bilinear interpolation of the field, clamped to the grid.
    pub fn value_at(&self, x: f64, t: f64) -> f64 {
        interp_bilinear(&self.field, &self.grid, x, t)
    }

    /// Raw derived-control table (same layout as the field), when the
    /// solver produced one.
    pub fn control_table(&self) -> Option<&[f64]> {
        self.control_table.as_deref()
    }

    /// Control value at `(x, t)` by bilinear interpolation.
    pub fn control_at(&self, x: f64, t: f64) -> Option<f64> {
        self.control_table
            .as_ref()
            .map(|tab| interp_bilinear(tab, &self.grid, x, t))
    }

    /// The derived control as a simulators-ready field (bilinear
    /// interpolation in `(x, t)`, clamped to the grid edges).
    pub fn derived_control(&self) -> Option<ControlField> {
        self.control_table.as_ref().map(|tab| {
            ControlField::grid_table_1d(
                tab.clone(),
                self.grid.nx,
                self.grid.x_min,
                self.grid.dx(),
                self.grid.dt(),
                Provenance::PdeDerived,
            )
        })
    }

    /// For an h-field solution: `r(u) = sqrt(h(x0, 0) - 1)`.
    pub fn relative_error_at(&self, x0: f64) -> f64 {
        debug_assert_eq!(self.kind, SolutionKind::HField);
        (self.value_at(x0, 0.0) - 1.0).max(0.0).sqrt()
    }

    /// Writes the field as CSV rows `t,x,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,x,value")?;
        for j in 0..=self.grid.nt {
            let t = j as f64 * self.grid.dt();
            for i in 0..self.grid.nx {
                writeln!(
                    w,
                    "{},{},{}",
                    fmt_g17(t),
                    fmt_g17(self.grid.node(i)),
                    fmt_g17(self.field[j * self.grid.nx + i])
                )?;
            }
        }
        Ok(())
    }
}

fn interp_bilinear(table: &[f64], grid: &Grid1D, x: f64, t: f64) -> f64 {
    let nx = grid.nx;
    let fx = ((x - grid.x_min) / grid.dx()).clamp(0.0, (nx - 1) as f64);
    let ft = (t / grid.dt()).clamp(0.0, grid.nt as f64);
    let i0 = (fx as usize).min(nx - 2);
    let j0 = (ft as usize).min(grid.nt.saturating_sub(1));
    let wx = fx - i0 as f64;
    let wt = ft - j0 as f64;
    let j1 = (j0 + 1).min(grid.nt);
    let v00 = table[j0 * nx + i0];
    let v01 = table[j0 * nx + i0 + 1];
    let v10 = table[j1 * nx + i0];
    let v11 = table[j1 * nx + i0 + 1];
    let v0 = v00 + wx * (v01 - v00);
    let v1 = v10 + wx * (v11 - v10);
    v0 + wt * (v1 - v0)
}
