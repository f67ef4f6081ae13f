//! Metastable double-well benchmark: `dX = -Psi'(X) dt + B dW` with
//! `Psi(x) = kappa (x^2 - 1)^2`, payoff `exp(-rho (X_T - 1)^2)` started
//! in the left well. Crossing into the right well is rare, which makes
//! the naive estimator degrade quickly in `kappa` and `rho`.

use crate::pde::{solve_psi_backward, Grid1D, PdeError, PdeSolution};
use crate::sde::{ControlField, CostFunctional, Diffusion, SdeModel};

#[derive(Debug, Clone, Copy)]
pub struct DoubleWellProblem {
    pub kappa: f64,
    pub rho: f64,
    /// Diffusion coefficient.
    pub b: f64,
    pub t_final: f64,
    pub x0: f64,
}

impl DoubleWellProblem {
    pub fn new(kappa: f64, rho: f64) -> Self {
        Self {
            kappa,
            rho,
            b: 1.0,
            t_final: 1.0,
            x0: -1.0,
        }
    }

    /// `-Psi'(x) = -4 kappa x (x^2 - 1)`.
    pub fn drift(&self, x: f64) -> f64 {
        -4.0 * self.kappa * x * (x * x - 1.0)
    }

    pub fn model(&self) -> SdeModel {
        let kappa = self.kappa;
        SdeModel::new(
            vec![self.x0],
            self.t_final,
            move |x, _t, out: &mut [f64]| out[0] = -4.0 * kappa * x[0] * (x[0] * x[0] - 1.0),
            Diffusion::Scalar(self.b),
        )
        .expect("validated coefficients")
    }

    pub fn cost(&self) -> CostFunctional {
        let rho = self.rho;
        CostFunctional::terminal_only(move |x: &[f64]| rho * (x[0] - 1.0) * (x[0] - 1.0))
    }

    /// Default PDE grid: the quartic potential confines the dynamics
    /// well inside `[-3, 3]`.
    pub fn default_grid(&self) -> Grid1D {
        Grid1D::new(-3.0, 3.0, 601, 1000, self.t_final).expect("valid grid")
    }

    /// Backward solve for `psi` and the derived optimal control.
    pub fn solve_optimal_control(
        &self,
        grid: &Grid1D,
    ) -> Result<(PdeSolution, ControlField), PdeError> {
        let sol = solve_psi_backward(&self.model(), &self.cost(), grid)?;
        let control = sol.derived_control().expect("psi solve carries a control");
        Ok((sol, control))
    }
}
