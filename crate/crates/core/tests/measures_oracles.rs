//! Quadrature- and sampling-backed checks of the divergence module.

mod common;

use nalgebra::{DMatrix, DVector};
use pathweight::measures::{
    gaussian_chi2, gaussian_kl, jensen_functional, kl_lower_bound, kl_marginal_chain,
    refined_bounds, GaussianMeasure, GriddedDensity1D, ParetoDensity,
};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

#[test]
fn gaussian_kl_matches_quadrature_on_random_pairs() {
    let mut rng = common::seeded_rng(2024);
    for trial in 0..20 {
        let d = 1 + trial % 3;
        let p = GaussianMeasure::new(
            common::random_mean(d, 1.0, &mut rng),
            common::random_spd(d, 0.5, &mut rng),
        )
        .unwrap();
        let q = GaussianMeasure::new(
            common::random_mean(d, 1.0, &mut rng),
            common::random_spd(d, 0.5, &mut rng),
        )
        .unwrap();
        let closed = gaussian_kl(&p, &q).unwrap();
        let quad = common::kl_by_quadrature(
            p.mean(),
            p.covariance(),
            q.mean(),
            q.covariance(),
            24,
        );
        assert!(
            (closed - quad).abs() <= 1e-6 * quad.abs().max(1e-9),
            "trial {trial}: closed {closed} vs quadrature {quad}"
        );
    }
}

#[test]
fn gaussian_chi2_matches_1d_quadrature() {
    let cases = [
        (0.0, 1.0, 0.3, 1.4),
        (-0.5, 0.8, 0.0, 1.0),
        (1.0, 2.0, 0.7, 2.5),
        (0.2, 1.0, 0.2, 1.1),
    ];
    for &(mp, vp, mq, vq) in &cases {
        let p = GaussianMeasure::new(
            DVector::from_vec(vec![mp]),
            DMatrix::from_vec(1, 1, vec![vp]),
        )
        .unwrap();
        let q = GaussianMeasure::new(
            DVector::from_vec(vec![mq]),
            DMatrix::from_vec(1, 1, vec![vq]),
        )
        .unwrap();
        let closed = gaussian_chi2(&p, &q).unwrap();
        let quad = common::chi2_1d_by_quadrature(mp, vp, mq, vq, 40_000);
        assert!(
            (closed - quad).abs() <= 1e-6 * (1.0 + quad),
            "closed {closed} vs quadrature {quad}"
        );
    }
}

#[test]
fn kl_bound_below_chi2_error_on_random_pair_sweep() {
    // exp(KL(p|q)) - 1 <= chi^2(p|q); sweep over pairs with a finite chi^2
    let mut rng = common::seeded_rng(77);
    let mut finite = 0;
    for _ in 0..50 {
        let d = 1 + (rng.gen::<u32>() % 3) as usize;
        let base = common::random_spd(d, 0.6, &mut rng);
        // proposal covariance inflated a little so 2 Sp^-1 - Sq^-1 stays SPD
        let scale = 1.0 + 0.6 * rng.gen::<f64>();
        let p = GaussianMeasure::new(common::random_mean(d, 0.6, &mut rng), base.clone()).unwrap();
        let q = GaussianMeasure::new(
            common::random_mean(d, 0.6, &mut rng),
            base * scale,
        )
        .unwrap();
        let chi2 = gaussian_chi2(&p, &q).unwrap();
        let bound = kl_lower_bound(gaussian_kl(&p, &q).unwrap()).unwrap();
        if chi2.is_finite() {
            finite += 1;
            assert!(
                bound <= chi2.sqrt() * (1.0 + 1e-10),
                "KL bound {bound} above chi-error {}",
                chi2.sqrt()
            );
        } else {
            // the bound trivially holds; nothing to compare
        }
    }
    assert!(finite >= 30, "only {finite} finite chi^2 pairs");
}

#[test]
fn marginal_chain_nondecreasing_on_hundred_pairs() {
    let mut rng = common::seeded_rng(918273);
    for trial in 0..100 {
        let d = 2 + trial % 7; // up to 8
        let p = GaussianMeasure::new(
            common::random_mean(d, 1.0, &mut rng),
            common::random_spd(d, 0.4, &mut rng),
        )
        .unwrap();
        let q = GaussianMeasure::new(
            common::random_mean(d, 1.0, &mut rng),
            common::random_spd(d, 0.4, &mut rng),
        )
        .unwrap();
        let chain = kl_marginal_chain(&p, &q).unwrap();
        for w in chain.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-10,
                "trial {trial}: chain decreased: {chain:?}"
            );
        }
    }
}

#[test]
fn lognormal_error_against_monte_carlo() {
    // r of exp(gamma . Y), Y ~ N(0, I2), gamma = (1, 1): closed form
    // sqrt(e^2 - 1); frozen-seed Monte Carlo with 10^6 draws agrees to 1%
    let gamma = DVector::from_vec(vec![1.0, 1.0]);
    let cov = DMatrix::identity(2, 2);
    let closed = pathweight::measures::lognormal_error(&gamma, &cov).unwrap();
    let mut rng = common::seeded_rng(18);
    let k = 1_000_000usize;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..k {
        let y0: f64 = rng.sample(StandardNormal);
        let y1: f64 = rng.sample(StandardNormal);
        let w = (y0 + y1).exp();
        sum += w;
        sum_sq += w * w;
    }
    let mean = sum / k as f64;
    let var = (sum_sq - k as f64 * mean * mean) / (k - 1) as f64;
    let sampled = var.sqrt() / mean;
    assert!(
        (sampled - closed).abs() <= 0.01 * closed,
        "sampled {sampled} vs closed {closed}"
    );
}

#[test]
fn pareto_refined_upper_bound_is_infinite() {
    // the Pareto pair has an unbounded density ratio: the refined upper
    // bound degenerates while the lower bound stays informative
    let alpha = 1.5;
    let p = ParetoDensity::new(alpha).unwrap();
    let q = ParetoDensity::new(2.0 * alpha).unwrap();
    let grid = ParetoDensity::geometric_grid(1e4, 4001);
    let pd = GriddedDensity1D::from_fn(grid.clone(), |x| p.density(x)).unwrap();
    let qd = GriddedDensity1D::from_fn(grid, |x| q.density(x)).unwrap();
    let (m_hat, m_cap, diverging) =
        pathweight::measures::density_ratio_extremes(&pd, &qd).unwrap();
    assert!(diverging);
    assert!(m_hat <= 1.0 && m_cap >= 1.0);
    let (lo, hi) = refined_bounds(m_hat.min(1.0), f64::INFINITY, 0.4, 0.2).unwrap();
    assert!(hi.is_infinite());
    assert!(lo.is_finite());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jensen_functional_nonnegative_for_convex_quadratics(
        a in 0.0f64..4.0,
        b in -2.0f64..2.0,
        c in -1.0f64..1.0,
        shift in -0.5f64..0.5,
    ) {
        // f(y) = a y^2 + b y + c is convex for a >= 0
        let nodes: Vec<f64> = (0..401).map(|i| shift + i as f64 / 400.0).collect();
        let density = GriddedDensity1D::from_fn(nodes, |x| 1.0 + 0.5 * (3.0 * x).sin())
            .unwrap()
            .normalized();
        let j = jensen_functional(|y| a * y * y + b * y + c, &density, |x| x * x).unwrap();
        prop_assert!(j >= -1e-10, "negative Jensen functional: {}", j);
    }

    #[test]
    fn refined_bounds_ordered(
        m in 0.0f64..1.0,
        excess in 0.0f64..4.0,
        kl_f in 0.0f64..2.0,
        kl_r in 0.0f64..2.0,
    ) {
        let (lo, hi) = refined_bounds(m, 1.0 + excess, kl_f, kl_r).unwrap();
        prop_assert!(lo <= hi);
    }
}
