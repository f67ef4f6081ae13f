//! Batch statistics: the importance sampling estimate, its relative
//! error, the chi^2 estimate and the path-KL estimate.
//!
//! Per-path weights are assembled in log space,
//! `log w = -int f ds - g(X_T) + log dP/dP^u`, and exponentiated once,
//! so strongly suboptimal controls cannot overflow intermediate
//! products. Reductions use pairwise summation: results are
//! reproducible bit-for-bit for a fixed batch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::sde::PathBatch;
use crate::util::{mean, pairwise_sum, pairwise_sum_by, sample_variance};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("batch is incomplete ({0} paths hit the time cap)")]
    IncompleteBatch(usize),
    #[error("all weights are zero; the payoff underflowed")]
    DegenerateWeights,
    #[error("batch carries no auxiliary accumulator for the control gap")]
    MissingAccumulator,
}

/// Importance sampling estimate with its dispersion diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct IsEstimate {
    /// Sample mean of the weighted payoff.
    pub z_hat: f64,
    /// Unbiased (k-1) sample variance of the weighted payoff.
    pub var_hat: f64,
    /// `sqrt(var_hat) / z_hat`; the per-sample relative error.
    pub rel_err_hat: f64,
    /// Effective sample size `(sum w)^2 / sum w^2`.
    pub ess: f64,
    pub k: usize,
    /// Standard error of `z_hat`: `sqrt(var_hat / k)`.
    pub stderr_z: f64,
}

fn weights(batch: &PathBatch) -> Result<Vec<f64>, EstimatorError> {
    if batch.k == 0 {
        return Err(EstimatorError::EmptyBatch);
    }
    if !batch.is_complete() {
        return Err(EstimatorError::IncompleteBatch(batch.incomplete.len()));
    }
    let w: Vec<f64> = (0..batch.k).map(|i| batch.log_weight(i).exp()).collect();
    if w.iter().all(|&x| x == 0.0) {
        return Err(EstimatorError::DegenerateWeights);
    }
    Ok(w)
}

fn estimate_from_weights(w: &[f64]) -> IsEstimate {
    let k = w.len();
    let z_hat = mean(w);
    let var_hat = sample_variance(w, z_hat);
    let sum_w = pairwise_sum(w);
    let sum_w2 = pairwise_sum_by(w, |x| x * x);
    IsEstimate {
        z_hat,
        var_hat,
        rel_err_hat: var_hat.sqrt() / z_hat,
        ess: sum_w * sum_w / sum_w2,
        k,
        stderr_z: (var_hat / k as f64).sqrt(),
    }
}

/// Estimate of `Z` and its relative error from a complete path batch.
pub fn importance_estimate(batch: &PathBatch) -> Result<IsEstimate, EstimatorError> {
    Ok(estimate_from_weights(&weights(batch)?))
}

/// chi^2 divergence estimate between the optimal and actual proposal.
///
/// Without a reference this is exactly `rel_err_hat^2` from the same
/// weights. Supplying the true `Z` as `z_reference` replaces the
/// denominator and removes the ratio bias of the self-normalized form.
pub fn chi2_hat(batch: &PathBatch, z_reference: Option<f64>) -> Result<f64, EstimatorError> {
    let w = weights(batch)?;
    let est = estimate_from_weights(&w);
    let denom = z_reference.unwrap_or(est.z_hat);
    Ok(est.var_hat / (denom * denom))
}

/// Path-space KL estimate `E[1/2 int |delta(X_s^{u*}, s)|^2 ds]` from a
/// batch simulated under the optimal control with the control gap as
/// auxiliary field. Feeding the result to
/// [`crate::measures::kl_lower_bound`] produces the path-space lower
/// bound on the relative error.
pub fn path_kl_estimate(batch: &PathBatch) -> Result<f64, EstimatorError> {
    if batch.k == 0 {
        return Err(EstimatorError::EmptyBatch);
    }
    let acc = batch
        .aux_sq_integral
        .as_ref()
        .ok_or(EstimatorError::MissingAccumulator)?;
    Ok(0.5 * mean(acc))
}

/// Nonparametric bootstrap standard error of `rel_err_hat`
/// (`resamples` resamples with replacement, deterministic in `seed`).
pub fn bootstrap_rel_err_stderr(
    batch: &PathBatch,
    resamples: usize,
    seed: u64,
) -> Result<f64, EstimatorError> {
    let w = weights(batch)?;
    Ok(bootstrap_stderr_of(&w, resamples, seed, |sample| {
        estimate_from_weights(sample).rel_err_hat
    }))
}

/// Bootstrap standard error of an arbitrary statistic of a sample.
pub(crate) fn bootstrap_stderr_of<F>(
    values: &[f64],
    resamples: usize,
    seed: u64,
    stat: F,
) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let k = values.len();
    let stats: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(0x8000_0000_0000_0000 | r as u64);
            let mut sample = Vec::with_capacity(k);
            for _ in 0..k {
                sample.push(values[rng.gen_range(0..k)]);
            }
            stat(&sample)
        })
        .collect();
    let m = mean(&stats);
    sample_variance(&stats, m).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{
        simulate_controlled, ControlField, CostFunctional, Diffusion, SdeModel, SimOptions,
        StoppingSpec, TimeGrid,
    };
    use approx::assert_relative_eq;

    fn constant_payoff_batch(k: usize) -> PathBatch {
        let model = SdeModel::new(
            vec![0.0],
            1.0,
            |_x, _t, out: &mut [f64]| out[0] = 0.0,
            Diffusion::Scalar(1.0),
        )
        .unwrap();
        let grid = TimeGrid::new(1.0, 16).unwrap();
        simulate_controlled(
            &model,
            &ControlField::zero(1),
            &CostFunctional::zero(),
            &grid,
            StoppingSpec::FixedHorizon,
            k,
            1,
            &SimOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn constant_payoff_has_zero_variance_and_full_ess() {
        let batch = constant_payoff_batch(128);
        let est = importance_estimate(&batch).unwrap();
        assert_eq!(est.z_hat, 1.0);
        assert_eq!(est.var_hat, 0.0);
        assert_eq!(est.rel_err_hat, 0.0);
        assert_relative_eq!(est.ess, 128.0, max_relative = 1e-14);
    }

    #[test]
    fn chi2_identity_with_rel_err_squared() {
        let model = SdeModel::new(
            vec![0.2],
            1.0,
            |x, _t, out: &mut [f64]| out[0] = -x[0],
            Diffusion::Scalar(1.0),
        )
        .unwrap();
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let batch = simulate_controlled(
            &model,
            &ControlField::constant(vec![0.25]),
            &CostFunctional::terminal_only(|x| 0.5 * x[0]),
            &grid,
            StoppingSpec::FixedHorizon,
            4096,
            2,
            &SimOptions::default(),
        )
        .unwrap();
        let est = importance_estimate(&batch).unwrap();
        let chi2 = chi2_hat(&batch, None).unwrap();
        assert_relative_eq!(
            chi2,
            est.rel_err_hat * est.rel_err_hat,
            max_relative = 1e-14
        );
        // reference denominator shifts the estimate but stays close here
        let chi2_ref = chi2_hat(&batch, Some(est.z_hat)).unwrap();
        assert_eq!(chi2, chi2_ref);
    }

    #[test]
    fn path_kl_constant_gap_is_deterministic() {
        // delta = (e, ..., e) constant: KL = d e^2 T / 2 exactly
        let d = 3;
        let eps = 0.4;
        let t_final = 1.5;
        let model = SdeModel::new(
            vec![0.0; d],
            t_final,
            |_x, _t, out: &mut [f64]| out.fill(0.0),
            Diffusion::Scalar(1.0),
        )
        .unwrap();
        let grid = TimeGrid::new(t_final, 60).unwrap();
        let opts = SimOptions {
            store_paths: false,
            aux: Some(ControlField::constant(vec![eps; d])),
        };
        let batch = simulate_controlled(
            &model,
            &ControlField::zero(d),
            &CostFunctional::zero(),
            &grid,
            StoppingSpec::FixedHorizon,
            32,
            3,
            &opts,
        )
        .unwrap();
        let kl = path_kl_estimate(&batch).unwrap();
        assert_relative_eq!(kl, 0.5 * d as f64 * eps * eps * t_final, max_relative = 1e-12);
    }

    #[test]
    fn path_kl_windowed_gap() {
        // delta = e on [0, 0.2], zero after: KL = d e^2 0.2 / 2
        let d = 2;
        let eps = 0.7;
        let s = 0.2;
        let model = SdeModel::new(
            vec![0.0; d],
            1.0,
            |_x, _t, out: &mut [f64]| out.fill(0.0),
            Diffusion::Scalar(1.0),
        )
        .unwrap();
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let window = ControlField::from_fn(d, crate::sde::Provenance::Analytic, move |_x, t, out| {
            let v = if t < s { eps } else { 0.0 };
            out.fill(v);
        });
        let opts = SimOptions { store_paths: false, aux: Some(window) };
        let batch = simulate_controlled(
            &model,
            &ControlField::zero(d),
            &CostFunctional::zero(),
            &grid,
            StoppingSpec::FixedHorizon,
            16,
            4,
            &opts,
        )
        .unwrap();
        let kl = path_kl_estimate(&batch).unwrap();
        assert_relative_eq!(kl, 0.5 * d as f64 * eps * eps * s, max_relative = 1e-10);
    }

    #[test]
    fn missing_accumulator_is_an_error() {
        let batch = constant_payoff_batch(8);
        assert!(matches!(
            path_kl_estimate(&batch),
            Err(EstimatorError::MissingAccumulator)
        ));
    }

    #[test]
    fn rel_err_invariant_under_weight_rescaling() {
        let mut batch = constant_payoff_batch(64);
        // make the weights non-constant, then shift all log weights by a constant
        for (i, tc) in batch.terminal_cost.iter_mut().enumerate() {
            *tc = (i % 7) as f64 * 0.1;
        }
        let r1 = importance_estimate(&batch).unwrap().rel_err_hat;
        for tc in batch.terminal_cost.iter_mut() {
            *tc += 2.5;
        }
        let r2 = importance_estimate(&batch).unwrap().rel_err_hat;
        assert_relative_eq!(r1, r2, max_relative = 1e-12);
    }

    #[test]
    fn bootstrap_stderr_is_deterministic_and_positive() {
        let mut batch = constant_payoff_batch(256);
        for (i, tc) in batch.terminal_cost.iter_mut().enumerate() {
            *tc = ((i * 37) % 11) as f64 * 0.05;
        }
        let a = bootstrap_rel_err_stderr(&batch, 100, 42).unwrap();
        let b = bootstrap_rel_err_stderr(&batch, 100, 42).unwrap();
        assert_eq!(a, b);
        assert!(a > 0.0);
    }
}
