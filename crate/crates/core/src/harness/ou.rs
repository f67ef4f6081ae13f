//! Linear (Ornstein-Uhlenbeck) benchmark system with an analytically
//! known zero-variance control.
//!
//! Dynamics `dX = A X dt + B dW`, `X_0 = 0`, payoff `exp(-alpha . X_T)`.
//! The optimal control is `u*(t) = -B' exp(A' (T - t)) alpha`, purely
//! time-dependent, which the simulator consumes as a lookup table.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::sde::{ControlField, CostFunctional, Diffusion, SdeModel, TimeGrid};
use crate::util::sub_seed;

/// Sub-seed tag for the random system matrices.
pub const MATRIX_STREAM_TAG: u64 = 1;

#[derive(Debug, Clone)]
pub struct OuSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub alpha: DVector<f64>,
    pub d: usize,
    pub t_final: f64,
    /// Sub-seed the matrices were drawn from, and how many draws were
    /// rejected before a stable (Hurwitz) `A` appeared.
    pub matrix_seed: u64,
    pub resamples: u32,
}

/// Draws `A = -3I + Xi`, `B = I + Xi'` with i.i.d. `N(0, sigma^2)`
/// entries, held fixed afterwards. Resamples (counting attempts) until
/// `A` is Hurwitz so the dynamics is stable on `[0, T]`.
pub fn sample_system(d: usize, t_final: f64, sigma: f64, seed: u64) -> OuSystem {
    let matrix_seed = sub_seed(seed, MATRIX_STREAM_TAG);
    let mut resamples = 0u32;
    loop {
        let mut rng = ChaCha8Rng::seed_from_u64(matrix_seed);
        rng.set_stream(resamples as u64);
        let draw =
            |rng: &mut ChaCha8Rng| DMatrix::from_fn(d, d, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
        let a = DMatrix::identity(d, d) * -3.0 + draw(&mut rng);
        let b = DMatrix::identity(d, d) + draw(&mut rng);
        let hurwitz = a.complex_eigenvalues().iter().all(|ev| ev.re < 0.0);
        let invertible = b.clone().lu().is_invertible();
        if hurwitz && invertible {
            return OuSystem {
                a,
                b,
                alpha: DVector::from_element(d, 1.0),
                d,
                t_final,
                matrix_seed,
                resamples,
            };
        }
        resamples += 1;
    }
}

impl OuSystem {
    pub fn model(&self) -> SdeModel {
        let a = self.a.clone();
        let d = self.d;
        SdeModel::new(
            vec![0.0; d],
            self.t_final,
            move |x, _t, out: &mut [f64]| {
                let m = a.as_slice(); // column-major
                out.fill(0.0);
                for j in 0..d {
                    let xj = x[j];
                    for i in 0..d {
                        out[i] += m[j * d + i] * xj;
                    }
                }
            },
            Diffusion::Matrix(self.b.clone()),
        )
        .expect("validated coefficients")
    }

    pub fn cost(&self) -> CostFunctional {
        let alpha = self.alpha.clone();
        CostFunctional::terminal_only(move |x: &[f64]| {
            alpha.iter().zip(x).map(|(a, v)| a * v).sum()
        })
    }

    /// `u*(t) = -B' exp(A' (T - t)) alpha`, tabulated on the grid times.
    pub fn u_star(&self, grid: &TimeGrid) -> ControlField {
        let at = self.a.transpose();
        let bt = self.b.transpose();
        let mut table = Vec::with_capacity(grid.n_steps() + 1);
        for j in 0..=grid.n_steps() {
            let remaining = self.t_final - j as f64 * grid.dt();
            let propagated = (at.clone() * remaining).exp() * &self.alpha;
            let u = -(&bt) * propagated;
            table.push(u.iter().copied().collect::<Vec<f64>>());
        }
        ControlField::time_table(table, grid.dt())
    }

    /// Horizon covariance `Sigma_T = int_0^T exp(As) B B' exp(A's) ds`
    /// by composite Simpson quadrature with `intervals` subintervals,
    /// and the exact value `Z = exp(alpha . Sigma_T alpha / 2)`.
    pub fn horizon_covariance(&self, intervals: usize) -> DMatrix<f64> {
        let n = if intervals.is_multiple_of(2) { intervals } else { intervals + 1 };
        let h = self.t_final / n as f64;
        let bbt = &self.b * self.b.transpose();
        let mut acc: DMatrix<f64> = DMatrix::zeros(self.d, self.d);
        for i in 0..=n {
            let s = i as f64 * h;
            let e = (self.a.clone() * s).exp();
            let term = &e * &bbt * e.transpose();
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += term * w;
        }
        acc * (h / 3.0)
    }

    /// Closed-form value of the quantity of interest,
    /// `Z = exp(alpha . Sigma_T alpha / 2)` (the terminal state is
    /// centered Gaussian with covariance `Sigma_T`).
    pub fn z_exact(&self, intervals: usize) -> f64 {
        let sigma_t = self.horizon_covariance(intervals);
        (0.5 * self.alpha.dot(&(&sigma_t * &self.alpha))).exp()
    }
}
