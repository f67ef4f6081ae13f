//! Path-space relative-error formulas and bounds.
//!
//! Everything here revolves around the control gap `delta = u* - u`.
//! When `|delta|` admits time-dependent envelopes the relative error is
//! bracketed in closed form, exactly so when `delta` is x-independent.
//! For general gaps two Monte Carlo routes evaluate the exact formula:
//!
//! ```text
//! r(u)^2 + 1 = E[ exp( -int |delta(X^u)|^2 ds + 2 int delta(X^u) . dW ) ]   (form 1)
//!            = E[ exp(  int |delta(X^{u+2delta})|^2 ds ) ]                  (form 2)
//! ```
//!
//! and a Hoelder argument yields an upper bound that only needs paths
//! under the practically available control `u`. The stopping-time
//! variant replaces the fixed horizon by the exit time of the
//! `2u* - u` process.

use thiserror::Error;

use crate::estimators::bootstrap_stderr_of;
use crate::sde::{
    simulate_controlled, ControlField, CostFunctional, PathBatch, SdeError, SdeModel, SimOptions,
    StoppingSpec, TimeGrid,
};
use crate::util::{mean, pairwise_sum_by, simpson};

#[derive(Debug, Error)]
pub enum BoundError {
    #[error("lower envelope exceeds upper envelope at t = {0}")]
    EnvelopeOrder(f64),
    #[error("envelope must be nonnegative at t = {0}")]
    NegativeEnvelope(f64),
    #[error("alpha must be nonzero; the constant-envelope formula covers alpha = 0")]
    ZeroFrequency,
    #[error("Hoelder exponents require n, p, q > 1 (got n = {n}, p = {p})")]
    BadHoelderExponents { n: f64, p: f64 },
    #[error("piecewise envelope needs one value per interval")]
    BadPiecewise,
    #[error("exit-time batch is incomplete ({0} paths hit the time cap)")]
    IncompleteBatch(usize),
    #[error("batch lacks exit times; simulate with first-exit stopping")]
    MissingExitTimes,
    #[error(transparent)]
    Simulation(#[from] SdeError),
}

/// Which formula or bound a [`BoundReport`] value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    ExactClosedForm,
    ExactMcForm1,
    ExactMcForm2,
    LowerKl,
    LowerH1,
    UpperH2,
    UpperHolder,
    HittingExact,
    HittingJensen,
    HittingNaive,
}

/// A single bound or formula evaluation. Monte Carlo kinds carry a
/// bootstrap standard error; `clamped` marks values truncated at zero
/// because the sampled mean fell below one (a finite-sample artifact),
/// `low_ess` flags fewer than 100 effective samples behind the mean.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub value: f64,
    pub stderr: Option<f64>,
    pub inputs_digest: String,
    pub clamped: bool,
    pub low_ess: bool,
}

impl BoundReport {
    /// Report for a closed-form (noise-free) evaluation.
    pub fn closed_form(kind: BoundKind, value: f64, inputs_digest: String) -> Self {
        Self {
            kind,
            value,
            stderr: None,
            inputs_digest,
            clamped: false,
            low_ess: false,
        }
    }
}

/// Envelope description of the control gap magnitude.
pub enum DeltaEnvelope {
    /// Every component satisfies `|delta_i(x, t)| = value_j` on
    /// `[breakpoints[j], breakpoints[j+1])`. The bracket collapses to
    /// the exact value `sqrt(exp(d * sum_j value_j^2 len_j) - 1)`.
    PiecewiseComponent {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
    /// Time-dependent envelopes on the full gap norm:
    /// `h1(t) <= |delta(x, t)| <= h2(t)`.
    ScalarEnvelope {
        h1: Box<dyn Fn(f64) -> f64 + Send + Sync>,
        h2: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl DeltaEnvelope {
    /// Component-constant gap `|delta_i| = eps` on all of `[0, T]`.
    pub fn component_constant(eps: f64, t_final: f64) -> Self {
        DeltaEnvelope::PiecewiseComponent {
            breakpoints: vec![0.0, t_final],
            values: vec![eps],
        }
    }

    /// Component gap `eps` active only on `[0, s]`.
    pub fn component_window(eps: f64, s: f64, t_final: f64) -> Self {
        DeltaEnvelope::PiecewiseComponent {
            breakpoints: vec![0.0, s, t_final],
            values: vec![eps, 0.0],
        }
    }

    /// Known gap norm `|delta(x, t)| = h(t)` (both envelopes coincide,
    /// the bracket is exact).
    pub fn exact_profile<H>(h: H) -> Self
    where
        H: Fn(f64) -> f64 + Send + Sync + Clone + 'static,
    {
        let h2 = h.clone();
        DeltaEnvelope::ScalarEnvelope {
            h1: Box::new(h),
            h2: Box::new(h2),
        }
    }
}

/// Relative-error bracket from envelopes on the control gap:
/// `(sqrt(exp(int h1^2) - 1), sqrt(exp(int h2^2) - 1))`.
///
/// The two ends coincide (and are exact, not bounds) when the gap does
/// not depend on the state. Quadrature for the scalar-envelope variant
/// is composite Simpson with `quad_intervals` subintervals.
pub fn constant_delta_error(
    envelope: &DeltaEnvelope,
    d: usize,
    t_final: f64,
    quad_intervals: usize,
) -> Result<(f64, f64), BoundError> {
    match envelope {
        DeltaEnvelope::PiecewiseComponent { breakpoints, values } => {
            if breakpoints.len() != values.len() + 1 {
                return Err(BoundError::BadPiecewise);
            }
            let mut integral = 0.0;
            for (j, &v) in values.iter().enumerate() {
                if v < 0.0 {
                    return Err(BoundError::NegativeEnvelope(breakpoints[j]));
                }
                integral += v * v * (breakpoints[j + 1] - breakpoints[j]);
            }
            let r = (d as f64 * integral).exp_m1().max(0.0).sqrt();
            Ok((r, r))
        }
        DeltaEnvelope::ScalarEnvelope { h1, h2 } => {
            let n = quad_intervals.max(2);
            for i in 0..=n {
                let t = t_final * i as f64 / n as f64;
                let (a, b) = (h1(t), h2(t));
                if a < 0.0 {
                    return Err(BoundError::NegativeEnvelope(t));
                }
                if a > b {
                    return Err(BoundError::EnvelopeOrder(t));
                }
            }
            let i1 = simpson(|t| h1(t) * h1(t), 0.0, t_final, n);
            let i2 = simpson(|t| h2(t) * h2(t), 0.0, t_final, n);
            Ok((
                i1.exp_m1().max(0.0).sqrt(),
                i2.exp_m1().max(0.0).sqrt(),
            ))
        }
    }
}

/// Exact relative error of the sine-in-time perturbation
/// `delta(t) = eps sin(alpha t)` in one dimension:
/// `sqrt(exp(eps^2 (T/2 - sin(2 alpha T) / (4 alpha))) - 1)`.
pub fn sine_perturbation_error(eps: f64, alpha: f64, t_final: f64) -> Result<f64, BoundError> {
    if alpha == 0.0 {
        return Err(BoundError::ZeroFrequency);
    }
    let integral = eps * eps * (t_final / 2.0 - (2.0 * alpha * t_final).sin() / (4.0 * alpha));
    Ok(integral.exp_m1().max(0.0).sqrt())
}

/// Which representation of the exact relative error to sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactErrorForm {
    /// Simulate under `u`; average `exp(-int |delta|^2 + 2 int delta . dW)`.
    UnderU,
    /// Simulate under `u + 2 delta = 2u* - u`; average `exp(int |delta|^2)`.
    UnderUPlus2Delta,
}

const BOOTSTRAP_RESAMPLES: usize = 200;

fn mc_report(
    kind: BoundKind,
    exponents: &[f64],
    seed: u64,
    digest: String,
) -> BoundReport {
    let k = exponents.len() as f64;
    let m = pairwise_sum_by(exponents, f64::exp) / k;
    let sum_e = pairwise_sum_by(exponents, f64::exp);
    let sum_e2 = pairwise_sum_by(exponents, |a| (2.0 * a).exp());
    let ess = sum_e * sum_e / sum_e2;
    let clamped = m < 1.0;
    let value = if clamped { 0.0 } else { (m - 1.0).sqrt() };
    let stderr = bootstrap_stderr_of(exponents, BOOTSTRAP_RESAMPLES, seed ^ 0x5bd1, |s| {
        let ms = pairwise_sum_by(s, f64::exp) / s.len() as f64;
        if ms < 1.0 {
            0.0
        } else {
            (ms - 1.0).sqrt()
        }
    });
    BoundReport {
        kind,
        value,
        stderr: Some(stderr),
        inputs_digest: digest,
        clamped,
        low_ess: ess < 100.0,
    }
}

/// Monte Carlo evaluation of the exact relative-error formula.
///
/// Form 1 is unbiased but heavy-tailed for large gaps; form 2 has an
/// integrand that is at least one pathwise but needs the (usually
/// unavailable) control `2u* - u`. Both report a bootstrap stderr.
#[allow(clippy::too_many_arguments)]
pub fn exact_error_mc(
    model: &SdeModel,
    u: &ControlField,
    delta: &ControlField,
    form: ExactErrorForm,
    grid: &TimeGrid,
    k: usize,
    seed: u64,
) -> Result<BoundReport, BoundError> {
    let digest = format!(
        "exact_mc form={form:?} d={} T={} k={k} seed={seed}",
        model.dim(),
        model.horizon()
    );
    let opts = SimOptions {
        store_paths: false,
        aux: Some(delta.clone()),
    };
    let batch = match form {
        ExactErrorForm::UnderU => simulate_controlled(
            model,
            u,
            &CostFunctional::zero(),
            grid,
            StoppingSpec::FixedHorizon,
            k,
            seed,
            &opts,
        )?,
        ExactErrorForm::UnderUPlus2Delta => {
            let tilted = ControlField::affine(vec![(1.0, u.clone()), (2.0, delta.clone())]);
            simulate_controlled(
                model,
                &tilted,
                &CostFunctional::zero(),
                grid,
                StoppingSpec::FixedHorizon,
                k,
                seed,
                &opts,
            )?
        }
    };
    let sq = batch.aux_sq_integral.as_ref().expect("aux requested");
    let exponents: Vec<f64> = match form {
        ExactErrorForm::UnderU => {
            let dw = batch.aux_brownian_integral.as_ref().expect("aux requested");
            sq.iter().zip(dw).map(|(&s, &w)| -s + 2.0 * w).collect()
        }
        ExactErrorForm::UnderUPlus2Delta => sq.clone(),
    };
    let kind = match form {
        ExactErrorForm::UnderU => BoundKind::ExactMcForm1,
        ExactErrorForm::UnderUPlus2Delta => BoundKind::ExactMcForm2,
    };
    Ok(mc_report(kind, &exponents, seed, digest))
}

/// Optimal Hoelder split for the `n`-th moment bound:
/// `p* = 1 + sqrt(1 - 1/n)` minimizes the exponent factor `q (np - 1)`.
pub fn holder_optimal_p(n: f64) -> f64 {
    1.0 + (1.0 - 1.0 / n).sqrt()
}

/// Hoelder upper bound on the relative error, sampled under `u`:
/// `r(u) <= sqrt( E[exp((1 + sqrt 2)^2 int |delta(X^u)|^2 ds)]^(1/(1+sqrt 2)) - 1 )`.
///
/// This is the `(n, p) = (2, p*)` member of [`holder_family_bound_mc`]:
/// looser than the exact formula but free of the `2u* - u` dynamics.
pub fn holder_bound_mc(
    model: &SdeModel,
    u: &ControlField,
    delta: &ControlField,
    grid: &TimeGrid,
    k: usize,
    seed: u64,
) -> Result<BoundReport, BoundError> {
    holder_family_bound_mc(model, u, delta, grid, k, seed, 2.0, holder_optimal_p(2.0))
}

/// General `(n, p)` member of the Hoelder bound family with
/// `q = p / (p - 1)`: bounds the `n`-th moment of the likelihood ratio;
/// for `n = 2` the reported value is the relative-error bound
/// `sqrt(E[exp(n q (np - 1) / 2 int |delta|^2)]^(1/q) - 1)`.
#[allow(clippy::too_many_arguments)]
pub fn holder_family_bound_mc(
    model: &SdeModel,
    u: &ControlField,
    delta: &ControlField,
    grid: &TimeGrid,
    k: usize,
    seed: u64,
    n: f64,
    p: f64,
) -> Result<BoundReport, BoundError> {
    if n <= 1.0 || p <= 1.0 {
        return Err(BoundError::BadHoelderExponents { n, p });
    }
    let q = p / (p - 1.0);
    debug_assert!(q > 1.0);
    let coeff = n * q * (n * p - 1.0) / 2.0;
    let digest = format!(
        "holder n={n} p={p} q={q} d={} T={} k={k} seed={seed}",
        model.dim(),
        model.horizon()
    );
    let opts = SimOptions {
        store_paths: false,
        aux: Some(delta.clone()),
    };
    let batch = simulate_controlled(
        model,
        u,
        &CostFunctional::zero(),
        grid,
        StoppingSpec::FixedHorizon,
        k,
        seed,
        &opts,
    )?;
    let sq = batch.aux_sq_integral.as_ref().expect("aux requested");
    let exponents: Vec<f64> = sq.iter().map(|&s| coeff * s).collect();
    let moment_bound = |sample: &[f64]| {
        let m = pairwise_sum_by(sample, f64::exp) / sample.len() as f64;
        let b = m.powf(1.0 / q);
        if b < 1.0 {
            0.0
        } else {
            (b - 1.0).sqrt()
        }
    };
    let value = moment_bound(&exponents);
    let stderr = bootstrap_stderr_of(&exponents, BOOTSTRAP_RESAMPLES, seed ^ 0x5bd1, moment_bound);
    let sum_e = pairwise_sum_by(&exponents, f64::exp);
    let sum_e2 = pairwise_sum_by(&exponents, |a| (2.0 * a).exp());
    let ess = sum_e * sum_e / sum_e2;
    Ok(BoundReport {
        kind: BoundKind::UpperHolder,
        value,
        stderr: Some(stderr),
        inputs_digest: digest,
        clamped: false,
        low_ess: ess < 100.0,
    })
}

/// Relative-error formulas for the exit-time problem with gap
/// `|delta| = eps`:
///
/// - exact:  `sqrt(E[exp(eps^2 tau')] - 1)` with `tau'` the exit time
///   of the `2u* - u` process,
/// - Jensen lower bound: `sqrt(exp(eps^2 E[tau']) - 1)`,
/// - the naive (usually wrong) variant with the uncontrolled exit time.
pub fn hitting_error(
    eps: f64,
    batch_2ustar_minus_u: &PathBatch,
    batch_plain: &PathBatch,
) -> Result<(BoundReport, BoundReport, BoundReport), BoundError> {
    for b in [batch_2ustar_minus_u, batch_plain] {
        if !b.is_complete() {
            return Err(BoundError::IncompleteBatch(b.incomplete.len()));
        }
    }
    let tau_tilted = batch_2ustar_minus_u
        .exit_time
        .as_ref()
        .ok_or(BoundError::MissingExitTimes)?;
    let tau_plain = batch_plain
        .exit_time
        .as_ref()
        .ok_or(BoundError::MissingExitTimes)?;

    let e2 = eps * eps;
    let exponents: Vec<f64> = tau_tilted.iter().map(|&t| e2 * t).collect();
    let exact = mc_report(
        BoundKind::HittingExact,
        &exponents,
        exit_seed(tau_tilted),
        format!("hitting exact eps={eps} k={}", tau_tilted.len()),
    );

    let jensen_of = |taus: &[f64]| (e2 * mean(taus)).exp_m1().max(0.0).sqrt();
    let jensen_value = jensen_of(tau_tilted);
    let jensen_stderr =
        bootstrap_stderr_of(tau_tilted, BOOTSTRAP_RESAMPLES, exit_seed(tau_tilted), |s| {
            jensen_of(s)
        });
    let naive_value = jensen_of(tau_plain);
    let naive_stderr =
        bootstrap_stderr_of(tau_plain, BOOTSTRAP_RESAMPLES, exit_seed(tau_plain), |s| {
            jensen_of(s)
        });

    let jensen = BoundReport {
        kind: BoundKind::HittingJensen,
        value: jensen_value,
        stderr: Some(jensen_stderr),
        inputs_digest: format!("hitting jensen eps={eps} k={}", tau_tilted.len()),
        clamped: false,
        low_ess: false,
    };
    let naive = BoundReport {
        kind: BoundKind::HittingNaive,
        value: naive_value,
        stderr: Some(naive_stderr),
        inputs_digest: format!("hitting naive eps={eps} k={}", tau_plain.len()),
        clamped: false,
        low_ess: false,
    };
    Ok((exact, jensen, naive))
}

/// Deterministic bootstrap seed from sample contents (the hitting
/// formulas receive batches, not seeds).
fn exit_seed(taus: &[f64]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &t in taus.iter().take(16) {
        h = (h ^ t.to_bits()).wrapping_mul(0x100000001b3);
    }
    h
}
