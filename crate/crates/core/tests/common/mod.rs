//! Shared test oracles, implemented independently of the library's own
//! computation paths (different factorizations, different quadratures,
//! different integrators).
// Each test binary compiles this module separately and uses a subset.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Gauss-Hermite nodes and weights for the weight `exp(-x^2)` via the
/// Golub-Welsch eigendecomposition of the Jacobi matrix.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::zeros(n, n);
    for i in 1..n {
        let b = (i as f64 / 2.0).sqrt();
        jacobi[(i, i - 1)] = b;
        jacobi[(i - 1, i)] = b;
    }
    let eig = nalgebra::SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let node = eig.eigenvalues[j];
            let v0 = eig.eigenvectors[(0, j)];
            (node, std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Independent Gaussian log-density via LU decomposition (the library
/// uses Cholesky).
pub fn log_density_lu(mean: &DVector<f64>, cov: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    let d = mean.len() as f64;
    let lu = cov.clone().lu();
    let det = lu.determinant();
    let diff = x - mean;
    let sol = lu.solve(&diff).expect("invertible covariance");
    -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + det.ln() + diff.dot(&sol))
}

/// KL divergence between Gaussians by tensor-product Gauss-Hermite
/// quadrature of `E_p[log p - log q]`; exact for the quadratic
/// integrand up to rounding. Practical for `d <= 3`.
pub fn kl_by_quadrature(
    mean_p: &DVector<f64>,
    cov_p: &DMatrix<f64>,
    mean_q: &DVector<f64>,
    cov_q: &DMatrix<f64>,
    nodes_per_dim: usize,
) -> f64 {
    let d = mean_p.len();
    let (nodes, weights) = gauss_hermite(nodes_per_dim);
    let chol_l = nalgebra::Cholesky::new(cov_p.clone())
        .expect("SPD covariance")
        .l();
    let mut idx = vec![0usize; d];
    let mut total = 0.0;
    let norm = std::f64::consts::PI.powf(-(d as f64) / 2.0);
    loop {
        let mut w = 1.0;
        let mut z = DVector::zeros(d);
        for (axis, &i) in idx.iter().enumerate() {
            w *= weights[i];
            z[axis] = nodes[i];
        }
        let x = mean_p + std::f64::consts::SQRT_2 * &chol_l * z;
        total += w
            * (log_density_lu(mean_p, cov_p, &x) - log_density_lu(mean_q, cov_q, &x));
        // odometer increment over the tensor grid
        let mut axis = 0;
        loop {
            if axis == d {
                return norm * total;
            }
            idx[axis] += 1;
            if idx[axis] < nodes_per_dim {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

/// chi^2 divergence between 1-D Gaussians by composite Simpson
/// quadrature of `p^2/q - 1` on a wide interval. The integrand is
/// assembled in log space so the tails cannot produce 0/0.
pub fn chi2_1d_by_quadrature(mp: f64, vp: f64, mq: f64, vq: f64, intervals: usize) -> f64 {
    let log_density = |m: f64, v: f64, x: f64| {
        -0.5 * (x - m) * (x - m) / v - 0.5 * (2.0 * std::f64::consts::PI * v).ln()
    };
    let sd = vp.sqrt().max(vq.sqrt());
    let lo = mp.min(mq) - 20.0 * sd;
    let hi = mp.max(mq) + 20.0 * sd;
    let n = if intervals % 2 == 0 { intervals } else { intervals + 1 };
    let h = (hi - lo) / n as f64;
    let f = |x: f64| (2.0 * log_density(mp, vp, x) - log_density(mq, vq, x)).exp();
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + i as f64 * h);
    }
    (s * h / 3.0 - 1.0).max(0.0)
}

/// Horizon covariance of the linear system,
/// `Sigma' = A Sigma + Sigma A' + B B'`, integrated with fixed-step RK4
/// (the library route uses matrix exponentials and Simpson weights).
pub fn lyapunov_rk4(a: &DMatrix<f64>, b: &DMatrix<f64>, horizon: f64, steps: usize) -> DMatrix<f64> {
    let d = a.nrows();
    let bbt = b * b.transpose();
    let f = |s: &DMatrix<f64>| a * s + s * a.transpose() + &bbt;
    let mut sigma = DMatrix::zeros(d, d);
    let h = horizon / steps as f64;
    for _ in 0..steps {
        let k1 = f(&sigma);
        let k2 = f(&(&sigma + (h / 2.0) * &k1));
        let k3 = f(&(&sigma + (h / 2.0) * &k2));
        let k4 = f(&(&sigma + h * &k3));
        sigma += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    sigma
}

/// Seeded random SPD matrix `A A' + ridge I` with `N(0, 1)` entries.
pub fn random_spd(d: usize, ridge: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    // symmetrize explicitly: A A' is symmetric only up to rounding
    let mut m = &a * a.transpose() + DMatrix::identity(d, d) * ridge;
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    m
}

/// Seeded random mean vector with entries in roughly `[-scale, scale]`.
pub fn random_mean(d: usize, scale: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(d, |_, _| scale * (rng.gen::<f64>() * 2.0 - 1.0))
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
