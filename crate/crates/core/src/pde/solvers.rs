//! Backward solvers: the linear psi-equation (whose log-gradient is the
//! optimal control), the small-noise HJB via exponential transform, the
//! second-moment equation and the relative-error (moment ratio) field.

use super::tridiag;
use super::{Grid1D, PdeError, PdeSolution, SolutionKind};
use crate::sde::{ControlField, CostFunctional, Diffusion, Provenance, SdeModel};

/// Lateral boundary treatment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    /// Zero-flux (reflecting) boundaries via ghost-node reflection.
    NeumannZeroFlux,
    /// Field pinned to a fixed value on both lateral boundaries.
    Dirichlet(f64),
}

fn sigma_scalar_1d(model: &SdeModel, x: f64, t: f64) -> f64 {
    match model.diffusion() {
        Diffusion::Scalar(s) => *s,
        Diffusion::Matrix(m) => m[(0, 0)],
        Diffusion::StateDependent(f) => {
            let mut buf = [0.0];
            f(&[x], t, &mut buf);
            buf[0]
        }
    }
}

fn drift_scalar_1d(model: &SdeModel, x: f64, t: f64) -> f64 {
    let mut out = [0.0];
    model.drift_into(&[x], t, &mut out);
    out[0]
}

/// Implicit-Euler backward sweep for
/// `(d_t + sigma^2/2 d_xx + B d_x + R) phi = 0`, `phi(x, T)` given.
/// Coefficients are evaluated at the new (implicit) time level.
fn backward_solve<S, B, R, G>(
    grid: &Grid1D,
    sigma: S,
    advection: B,
    reaction: R,
    terminal: G,
    boundary: Boundary,
) -> Result<Vec<f64>, PdeError>
where
    S: Fn(f64, f64) -> f64,
    B: Fn(f64, f64) -> f64,
    R: Fn(f64, f64) -> f64,
    G: Fn(f64) -> f64,
{
    let nx = grid.nx;
    let nt = grid.nt;
    let dx = grid.dx();
    let dt = grid.dt();
    let mut field = vec![0.0; (nt + 1) * nx];
    let mut all_zero = true;
    for i in 0..nx {
        let v = terminal(grid.node(i));
        if !v.is_finite() {
            return Err(PdeError::InvalidGrid("terminal data is not finite"));
        }
        if v != 0.0 {
            all_zero = false;
        }
        field[nt * nx + i] = v;
    }
    if all_zero {
        return Err(PdeError::TerminalUnderflow);
    }

    let mut lower = vec![0.0; nx];
    let mut diag = vec![0.0; nx];
    let mut upper = vec![0.0; nx];
    let mut rhs = vec![0.0; nx];
    let mut scratch = vec![0.0; nx];

    for j in (0..nt).rev() {
        let t = j as f64 * dt;
        for i in 0..nx {
            let x = grid.node(i);
            let s = sigma(x, t);
            let half = 0.5 * s * s / (dx * dx);
            let rea = reaction(x, t);
            if i == 0 || i == nx - 1 {
                match boundary {
                    Boundary::NeumannZeroFlux => {
                        // ghost reflection: d_xx ~ 2(phi_nb - phi_i)/dx^2,
                        // centered d_x vanishes
                        diag[i] = 1.0 + dt * 2.0 * half - dt * rea;
                        if i == 0 {
                            lower[i] = 0.0;
                            upper[i] = -dt * 2.0 * half;
                        } else {
                            lower[i] = -dt * 2.0 * half;
                            upper[i] = 0.0;
                        }
                    }
                    Boundary::Dirichlet(_) => {
                        diag[i] = 1.0;
                        lower[i] = 0.0;
                        upper[i] = 0.0;
                    }
                }
            } else {
                let conv = advection(x, t) / (2.0 * dx);
                lower[i] = -dt * (half - conv);
                diag[i] = 1.0 + dt * 2.0 * half - dt * rea;
                upper[i] = -dt * (half + conv);
            }
        }
        rhs.copy_from_slice(&field[(j + 1) * nx..(j + 2) * nx]);
        if let Boundary::Dirichlet(v) = boundary {
            rhs[0] = v;
            rhs[nx - 1] = v;
        }
        tridiag::solve_in_place(&lower, &diag, &upper, &mut rhs, &mut scratch);
        field[j * nx..(j + 1) * nx].copy_from_slice(&rhs);
    }
    Ok(field)
}

fn check_positive(field: &[f64], grid: &Grid1D, kind: &'static str) -> Result<(), PdeError> {
    for j in 0..=grid.nt {
        for i in 0..grid.nx {
            let v = field[j * grid.nx + i];
            if !v.is_finite() || v <= 0.0 {
                return Err(PdeError::PositivityLost {
                    kind,
                    x: grid.node(i),
                    t: j as f64 * grid.dt(),
                    value: v,
                });
            }
        }
    }
    Ok(())
}

/// Derivative table `coeff(x, t) * d_x transform(field)` with centered
/// interior differences and one-sided differences at the edges.
fn derivative_table<T, C>(field: &[f64], grid: &Grid1D, transform: T, coeff: C) -> Vec<f64>
where
    T: Fn(f64) -> f64,
    C: Fn(f64, f64) -> f64,
{
    let nx = grid.nx;
    let dx = grid.dx();
    let mut table = vec![0.0; field.len()];
    for j in 0..=grid.nt {
        let t = j as f64 * grid.dt();
        let row = &field[j * nx..(j + 1) * nx];
        for i in 0..nx {
            let slope = if i == 0 {
                (transform(row[1]) - transform(row[0])) / dx
            } else if i == nx - 1 {
                (transform(row[nx - 1]) - transform(row[nx - 2])) / dx
            } else {
                (transform(row[i + 1]) - transform(row[i - 1])) / (2.0 * dx)
            };
            table[j * nx + i] = coeff(grid.node(i), t) * slope;
        }
    }
    table
}

/// Solves the linear backward equation `(d_t + L - f) psi = 0` with
/// `psi(x, T) = exp(-g(x))` and zero-flux lateral boundaries; the
/// derived control is `u*(x, t) = sigma d_x log psi`.
pub fn solve_psi_backward(
    model: &SdeModel,
    cost: &CostFunctional,
    grid: &Grid1D,
) -> Result<PdeSolution, PdeError> {
    solve_psi_backward_with(model, cost, grid, Boundary::NeumannZeroFlux)
}

/// [`solve_psi_backward`] with an explicit boundary choice. The
/// Dirichlet variant (value pinned to `exp(-g)` at the walls, i.e. 1
/// for `g = 0`) marches the exit-problem analogue to its stationary
/// solution when `t_final` is large.
pub fn solve_psi_backward_with(
    model: &SdeModel,
    cost: &CostFunctional,
    grid: &Grid1D,
    boundary: Boundary,
) -> Result<PdeSolution, PdeError> {
    if model.dim() != 1 {
        return Err(PdeError::NotOneDimensional(model.dim()));
    }
    let field = backward_solve(
        grid,
        |x, t| sigma_scalar_1d(model, x, t),
        |x, t| drift_scalar_1d(model, x, t),
        |x, t| -cost.running_at(&[x], t),
        |x| (-cost.terminal_at(&[x])).exp(),
        boundary,
    )?;
    check_positive(&field, grid, "psi")?;
    let table = derivative_table(&field, grid, f64::ln, |x, t| sigma_scalar_1d(model, x, t));
    Ok(PdeSolution::new(*grid, SolutionKind::Psi, field, Some(table)))
}

/// Closed-form value function of the zero-viscosity (deterministic)
/// limit problem for the scaled Brownian motion with terminal cost
/// `g(x) = alpha/2 (1 - |x|/sqrt(alpha))^2`:
///
/// `V0(x, t) = alpha (1 - |x|/sqrt(alpha))^2 / (2 (T - t + 1))`.
#[derive(Debug, Clone, Copy)]
pub struct SmallNoiseV0 {
    pub alpha: f64,
    pub t_final: f64,
}

/// Constructor for [`SmallNoiseV0`]; `alpha > 0`.
pub fn smallnoise_v0(alpha: f64, t_final: f64) -> SmallNoiseV0 {
    assert!(alpha > 0.0 && t_final > 0.0);
    SmallNoiseV0 { alpha, t_final }
}

impl SmallNoiseV0 {
    pub fn terminal_cost(&self, x: f64) -> f64 {
        let w = 1.0 - x.abs() / self.alpha.sqrt();
        0.5 * self.alpha * w * w
    }

    pub fn value(&self, x: f64, t: f64) -> f64 {
        let w = 1.0 - x.abs() / self.alpha.sqrt();
        self.alpha * w * w / (2.0 * (self.t_final - t + 1.0))
    }

    /// `u0 = -d_x V0` (unit dispersion channel). The kink of `|x|` at
    /// zero is resolved with the right derivative: the dynamics of
    /// interest starts at x > 0, so the convention is off-path.
    pub fn control(&self, x: f64, t: f64) -> f64 {
        let sgn = if x >= 0.0 { 1.0 } else { -1.0 };
        let w = 1.0 - x.abs() / self.alpha.sqrt();
        sgn * self.alpha.sqrt() * w / (self.t_final - t + 1.0)
    }

    /// The control as a 1-D field.
    pub fn control_field(&self) -> ControlField {
        let me = *self;
        ControlField::from_fn(1, Provenance::Analytic, move |x, t, out| {
            out[0] = me.control(x[0], t)
        })
    }
}

/// Value function `V^eta` (and control `u* = -d_x V^eta`) of the
/// small-noise problem `X = sqrt(eta) W`, payoff `exp(-g/eta)` with the
/// [`SmallNoiseV0`] terminal cost.
///
/// Internally the linear equation for
/// `psi^eta(x, t) = E[exp(-g(X_T)/eta) | X_t = x]` is solved and
/// `V^eta = -eta log psi^eta`; this is equivalent to the nonlinear HJB
/// equation and keeps the discretization positive. A terminal underflow
/// (grid too coarse for the requested `eta`) is reported as an error.
pub fn solve_hjb_smallnoise(
    eta: f64,
    alpha: f64,
    grid: &Grid1D,
) -> Result<PdeSolution, PdeError> {
    if eta.is_nan() || eta <= 0.0 {
        return Err(PdeError::InvalidGrid("eta must be positive"));
    }
    let v0 = smallnoise_v0(alpha, grid.t_final);
    let field = backward_solve(
        grid,
        |_x, _t| eta.sqrt(),
        |_x, _t| 0.0,
        |_x, _t| 0.0,
        |x| (-v0.terminal_cost(x) / eta).exp(),
        Boundary::NeumannZeroFlux,
    )?;
    check_positive(&field, grid, "psi")?;
    // V = -eta log psi; u* = -d_x V = eta d_x log psi
    let value: Vec<f64> = field.iter().map(|&p| -eta * p.ln()).collect();
    let table = derivative_table(&value, grid, |v| v, |_x, _t| -1.0);
    Ok(PdeSolution::new(*grid, SolutionKind::ValueV, value, Some(table)))
}

/// Solves the relative-error equation
/// `(d_t + L^{u+2delta} + |delta|^2) h_u = 0`, `h_u(x, T) = 1`,
/// whose initial value gives `r(u) = sqrt(h_u(x0, 0) - 1)`.
pub fn solve_h_field(
    model: &SdeModel,
    u: &ControlField,
    delta: &ControlField,
    grid: &Grid1D,
) -> Result<PdeSolution, PdeError> {
    if model.dim() != 1 {
        return Err(PdeError::NotOneDimensional(model.dim()));
    }
    let field = backward_solve(
        grid,
        |x, t| sigma_scalar_1d(model, x, t),
        |x, t| {
            let s = sigma_scalar_1d(model, x, t);
            drift_scalar_1d(model, x, t)
                + s * (u.evaluate_scalar(x, t) + 2.0 * delta.evaluate_scalar(x, t))
        },
        |x, t| {
            let d = delta.evaluate_scalar(x, t);
            d * d
        },
        |_x| 1.0,
        Boundary::NeumannZeroFlux,
    )?;
    // Feynman-Kac integrand is >= 1; anything below signals a scheme or
    // grid failure.
    for j in 0..=grid.nt {
        for i in 0..grid.nx {
            let v = field[j * grid.nx + i];
            if v < 1.0 - 1e-6 || !v.is_finite() {
                return Err(PdeError::HFieldBelowOne {
                    x: grid.node(i),
                    t: j as f64 * grid.dt(),
                    value: v,
                });
            }
        }
    }
    Ok(PdeSolution::new(*grid, SolutionKind::HField, field, None))
}

/// Solves the second-moment equation
/// `(d_t + L - sigma u . d_x - 2f + |u|^2) M_u = 0`, `M_u(x, T) = exp(-2g)`.
pub fn solve_second_moment(
    model: &SdeModel,
    u: &ControlField,
    cost: &CostFunctional,
    grid: &Grid1D,
) -> Result<PdeSolution, PdeError> {
    if model.dim() != 1 {
        return Err(PdeError::NotOneDimensional(model.dim()));
    }
    let field = backward_solve(
        grid,
        |x, t| sigma_scalar_1d(model, x, t),
        |x, t| {
            drift_scalar_1d(model, x, t)
                - sigma_scalar_1d(model, x, t) * u.evaluate_scalar(x, t)
        },
        |x, t| {
            let uu = u.evaluate_scalar(x, t);
            -2.0 * cost.running_at(&[x], t) + uu * uu
        },
        |x| (-2.0 * cost.terminal_at(&[x])).exp(),
        Boundary::NeumannZeroFlux,
    )?;
    check_positive(&field, grid, "second_moment")?;
    Ok(PdeSolution::new(*grid, SolutionKind::SecondMoment, field, None))
}

/// Closed-form solution of the exit problem `X = sqrt(2) W` on a
/// symmetric domain `(-a, a)` with unit running cost:
/// `psi(x) = cosh(x)/cosh(a)` solves `(d_xx - 1) psi = 0` with
/// `psi(+-a) = 1`, and the zero-variance control is
/// `u*(x) = sqrt(2) d_x log psi = sqrt(2) tanh(x)`, independent of `a`.
#[derive(Debug, Clone, Copy)]
pub struct HittingSolution {
    pub a: f64,
}

pub fn hitting_closedform(a: f64) -> HittingSolution {
    assert!(a > 0.0);
    HittingSolution { a }
}

impl HittingSolution {
    /// `E[exp(-tau) | X_0 = x]`.
    pub fn psi(&self, x: f64) -> f64 {
        x.cosh() / self.a.cosh()
    }

    pub fn u_star(&self, x: f64) -> f64 {
        std::f64::consts::SQRT_2 * x.tanh()
    }

    /// The rational form `sqrt(2) (1 - exp(-2x)) / (exp(-2x) + 1)`;
    /// algebraically identical to [`Self::u_star`].
    pub fn u_star_rational(&self, x: f64) -> f64 {
        let e = (-2.0 * x).exp();
        std::f64::consts::SQRT_2 * (1.0 - e) / (e + 1.0)
    }

    pub fn u_star_field(&self) -> ControlField {
        ControlField::from_fn(1, Provenance::Analytic, |x, _t, out| {
            out[0] = std::f64::consts::SQRT_2 * x[0].tanh()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::Diffusion;
    use approx::assert_relative_eq;

    fn brownian_model_1d(sigma: f64, horizon: f64, x0: f64) -> SdeModel {
        SdeModel::new(
            vec![x0],
            horizon,
            |_x, _t, out: &mut [f64]| out[0] = 0.0,
            Diffusion::Scalar(sigma),
        )
        .unwrap()
    }

    #[test]
    fn trivial_cost_gives_unit_psi_and_zero_control() {
        let model = brownian_model_1d(1.0, 1.0, 0.0);
        let grid = Grid1D::new(-2.0, 2.0, 101, 50, 1.0).unwrap();
        let sol = solve_psi_backward(&model, &CostFunctional::zero(), &grid).unwrap();
        for &v in sol.field() {
            assert!((v - 1.0).abs() < 1e-12);
        }
        for &u in sol.control_table().unwrap() {
            assert!(u.abs() < 1e-10);
        }
    }

    #[test]
    fn ou_derived_control_matches_analytic_formula() {
        // dX = a X dt + b dW, g = alpha x: u*(t) = -b exp(a (T - t)) alpha
        let (a, b, alpha) = (-1.0, 1.0, 0.8);
        let model = SdeModel::new(
            vec![0.0],
            1.0,
            move |x, _t, out: &mut [f64]| out[0] = a * x[0],
            Diffusion::Scalar(b),
        )
        .unwrap();
        let grid = Grid1D::new(-5.0, 5.0, 501, 400, 1.0).unwrap();
        let cost = CostFunctional::terminal_only(move |x: &[f64]| alpha * x[0]);
        let sol = solve_psi_backward(&model, &cost, &grid).unwrap();
        let mut worst = 0.0f64;
        for j in 0..=grid.nt {
            let t = j as f64 * grid.dt();
            let exact = -b * (a * (1.0 - t)).exp() * alpha;
            // inner half of the grid
            for i in (grid.nx / 4)..(3 * grid.nx / 4) {
                let got = sol.control_table().unwrap()[j * grid.nx + i];
                worst = worst.max((got - exact).abs() / exact.abs());
            }
        }
        assert!(worst < 0.01, "sup-norm relative mismatch {worst}");
    }

    #[test]
    fn dirichlet_march_recovers_cosh_exit_solution() {
        // stationary limit of (d_t + d_xx - 1) w = 0 with w = 1 on the walls
        let model = brownian_model_1d(std::f64::consts::SQRT_2, 10.0, 0.0);
        let grid = Grid1D::new(-1.0, 1.0, 201, 1000, 10.0).unwrap();
        let cost = CostFunctional::constant_running(1.0);
        let sol =
            solve_psi_backward_with(&model, &cost, &grid, Boundary::Dirichlet(1.0)).unwrap();
        let closed = hitting_closedform(1.0);
        let mut worst = 0.0f64;
        for i in 0..grid.nx {
            let x = grid.node(i);
            let got = sol.value_at(x, 0.0);
            worst = worst.max((got - closed.psi(x)).abs() / closed.psi(x));
        }
        assert!(worst < 0.005, "cosh recovery off by {worst}");
        assert_relative_eq!(closed.psi(0.0), 0.6480542736638855, max_relative = 1e-12);
        // derived control vs sqrt(2) tanh(x) away from the walls
        for i in (grid.nx / 5)..(4 * grid.nx / 5) {
            let x = grid.node(i);
            let got = sol.control_table().unwrap()[i];
            assert!(
                (got - closed.u_star(x)).abs() < 0.01,
                "u* mismatch at x = {x}: {got}"
            );
        }
    }

    #[test]
    fn printed_and_tanh_forms_of_exit_control_agree() {
        let c = hitting_closedform(1.0);
        assert_eq!(c.u_star(0.0), 0.0);
        let mut x = -5.0;
        while x <= 5.0 {
            assert!((c.u_star(x) - c.u_star_rational(x)).abs() < 1e-14);
            x += 0.25;
        }
    }

    #[test]
    fn smallnoise_v0_closed_form_values() {
        let v0 = smallnoise_v0(1.0, 1.0);
        // terminal slice equals the terminal cost
        for x in [-1.5, -0.3, 0.0, 0.7, 2.0] {
            assert_relative_eq!(v0.value(x, 1.0), v0.terminal_cost(x), max_relative = 1e-14);
        }
        // vertex of the quadratic: zero for all t
        assert_eq!(v0.value(1.0, 0.3), 0.0);
        assert_relative_eq!(v0.value(0.0, 0.0), 0.25, max_relative = 1e-14);
        // right-derivative convention at the kink
        assert!(v0.control(0.0, 0.0) > 0.0);
    }

    #[test]
    fn hjb_smallnoise_terminal_slice_is_exact() {
        let eta = 10.0;
        let grid = Grid1D::new(-2.0, 2.0, 201, 100, 1.0).unwrap();
        let sol = solve_hjb_smallnoise(eta, 1.0, &grid).unwrap();
        let v0 = smallnoise_v0(1.0, 1.0);
        for i in 0..grid.nx {
            let x = grid.node(i);
            assert_relative_eq!(
                sol.slice(grid.nt)[i],
                v0.terminal_cost(x),
                epsilon = 1e-12,
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn h_field_constant_gap_matches_exponential_and_is_x_independent() {
        let model = brownian_model_1d(1.0, 1.0, 0.0);
        let grid = Grid1D::new(-2.0, 2.0, 101, 500, 1.0).unwrap();
        let eps = 0.3;
        let sol = solve_h_field(
            &model,
            &ControlField::zero(1),
            &ControlField::constant(vec![eps]),
            &grid,
        )
        .unwrap();
        let expected = (eps * eps).exp();
        let first = sol.slice(0)[0];
        for &v in sol.slice(0) {
            assert!((v - first).abs() < 1e-10, "initial slice must be flat");
        }
        assert_relative_eq!(first, expected, max_relative = 1e-4);
        assert_relative_eq!(
            sol.relative_error_at(0.37),
            (expected - 1.0).sqrt(),
            max_relative = 1e-3
        );
    }

    #[test]
    fn trivial_second_moment_is_one() {
        let model = brownian_model_1d(1.0, 1.0, 0.0);
        let grid = Grid1D::new(-2.0, 2.0, 51, 40, 1.0).unwrap();
        let sol =
            solve_second_moment(&model, &ControlField::zero(1), &CostFunctional::zero(), &grid)
                .unwrap();
        for &v in sol.field() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn multidimensional_models_are_rejected() {
        let model = SdeModel::new(
            vec![0.0, 0.0],
            1.0,
            |_x, _t, out: &mut [f64]| out.fill(0.0),
            Diffusion::Scalar(1.0),
        )
        .unwrap();
        let grid = Grid1D::new(-1.0, 1.0, 11, 5, 1.0).unwrap();
        assert!(matches!(
            solve_psi_backward(&model, &CostFunctional::zero(), &grid),
            Err(PdeError::NotOneDimensional(2))
        ));
    }
}
