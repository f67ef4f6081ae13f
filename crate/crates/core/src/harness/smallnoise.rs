//! Small-noise diffusion pieces: the dynamics `X = sqrt(eta) W` with
//! payoff `exp(-g(X_T)/eta)`, the zero-viscosity control as a proposal,
//! and the PDE/MC quantities the experiments report.
//!
//! The experiments work in the "dispersion channel" convention, where a
//! control `u` enters the drift as `+u` while the noise is
//! `sqrt(eta) dW`. The simulator's standard convention couples the
//! control through the full diffusion coefficient, so channel controls
//! are rescaled by `1/sqrt(eta)` before simulation.

use crate::pde::{
    smallnoise_v0, solve_h_field, solve_hjb_smallnoise, Grid1D, PdeError, PdeSolution,
    SmallNoiseV0,
};
use crate::sde::{ControlField, CostFunctional, Diffusion, SdeModel};

#[derive(Debug, Clone, Copy)]
pub struct SmallNoiseProblem {
    pub eta: f64,
    pub alpha: f64,
    pub t_final: f64,
    pub x0: f64,
}

impl SmallNoiseProblem {
    pub fn new(eta: f64, alpha: f64, t_final: f64, x0: f64) -> Self {
        Self {
            eta,
            alpha,
            t_final,
            x0,
        }
    }

    pub fn model(&self) -> SdeModel {
        SdeModel::new(
            vec![self.x0],
            self.t_final,
            |_x, _t, out: &mut [f64]| out[0] = 0.0,
            Diffusion::Scalar(self.eta.sqrt()),
        )
        .expect("validated coefficients")
    }

    /// Terminal cost of the rescaled payoff: `g(x)/eta`.
    pub fn cost(&self) -> CostFunctional {
        let v0 = self.v0();
        let eta = self.eta;
        CostFunctional::terminal_only(move |x: &[f64]| v0.terminal_cost(x[0]) / eta)
    }

    pub fn v0(&self) -> SmallNoiseV0 {
        smallnoise_v0(self.alpha, self.t_final)
    }

    /// Default PDE grid; fine enough in space that the advection of the
    /// relative-error equation stays resolved at small `eta`.
    pub fn default_grid(&self) -> Grid1D {
        let nt = ((self.t_final * 1000.0).round() as usize).max(200);
        Grid1D::new(-2.0, 2.0, 1601, nt, self.t_final).expect("valid grid")
    }

    /// Solves for `V^eta`; the solution's control table holds the
    /// channel control `u* = -d_x V^eta`.
    pub fn solve_value(&self, grid: &Grid1D) -> Result<PdeSolution, PdeError> {
        solve_hjb_smallnoise(self.eta, self.alpha, grid)
    }

    /// Zero-viscosity channel control `u0 = -d_x V0` as a field.
    pub fn u0_channel(&self) -> ControlField {
        self.v0().control_field()
    }

    /// Channel control gap `u* - u0` from a solved value function.
    pub fn delta_channel(&self, value: &PdeSolution) -> ControlField {
        let u_star = value.derived_control().expect("value solve carries a control");
        ControlField::affine(vec![(1.0, u_star), (-1.0, self.u0_channel())])
    }

    /// Rescales a channel control to the simulator convention.
    pub fn to_simulator(&self, channel: &ControlField) -> ControlField {
        channel.clone().scaled(1.0 / self.eta.sqrt())
    }

    /// Sup-norm gap between the solved control and the zero-viscosity
    /// control at `t = 0` over `[lo, hi]` (channel units).
    pub fn control_gap_sup(&self, value: &PdeSolution, lo: f64, hi: f64) -> f64 {
        let v0 = self.v0();
        let grid = value.grid();
        let mut worst = 0.0f64;
        for i in 0..grid.nx {
            let x = grid.node(i);
            if x < lo || x > hi {
                continue;
            }
            let got = value.control_at(x, 0.0).expect("control table");
            worst = worst.max((got - v0.control(x, 0.0)).abs());
        }
        worst
    }

    /// Relative error of the zero-viscosity proposal from the
    /// relative-error PDE: `r(u0) = sqrt(h(x0, 0) - 1)` where the
    /// h-equation runs under `u0 + 2 delta` in simulator units.
    pub fn r_u0_pde(&self, value: &PdeSolution, grid: &Grid1D) -> Result<f64, PdeError> {
        let u0_sim = self.to_simulator(&self.u0_channel());
        let delta_sim = self.to_simulator(&self.delta_channel(value));
        let h = solve_h_field(&self.model(), &u0_sim, &delta_sim, grid)?;
        Ok(h.relative_error_at(self.x0))
    }
}
