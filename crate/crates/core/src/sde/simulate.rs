//! Euler-Maruyama time stepping with Girsanov log-weight accumulation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::control::ControlField;
use super::model::{CostFunctional, Diffusion, SdeModel};
use super::{PathBatch, SdeError, StoppingSpec, TimeGrid};

/// Optional per-batch extras.
#[derive(Clone, Default)]
pub struct SimOptions {
    /// Keep the full state history (fixed-horizon runs only).
    pub store_paths: bool,
    /// Auxiliary field `a(x, t)` whose squared-norm time integral and
    /// Brownian line integral are accumulated along each path. Used for
    /// the path-KL estimate and the exact relative-error formulas.
    pub aux: Option<ControlField>,
}

struct PathOutcome {
    running: f64,
    terminal: f64,
    log_girsanov: f64,
    exit_time: f64,
    capped: bool,
    aux_sq: f64,
    aux_dw: f64,
    states: Option<Vec<f64>>,
}

/// RNG for path `i`: one root seed, one counter-based stream per path.
/// Scheduling across worker threads cannot change what a path draws.
#[inline]
fn substream(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Simulates `k` paths of `dX = (b + sigma u) dt + sigma dW` from the
/// model's initial state, accumulating the running cost, the terminal
/// cost and the Girsanov log-weight `log dP/dP^u` step by step with the
/// same Brownian increments that drive the path.
///
/// With first-exit stopping (1-D only) each path halts at the first
/// step that leaves `(a, b)`; the exit time is linearly interpolated
/// between the last inside and first outside state. Paths still inside
/// at the time cap are listed in [`PathBatch::incomplete`].
///
/// Non-finite states abort the whole batch with the offending path.
#[allow(clippy::too_many_arguments)]
pub fn simulate_controlled(
    model: &SdeModel,
    control: &ControlField,
    cost: &CostFunctional,
    grid: &TimeGrid,
    stopping: StoppingSpec,
    k: usize,
    seed: u64,
    opts: &SimOptions,
) -> Result<PathBatch, SdeError> {
    if k == 0 {
        return Err(SdeError::EmptyBatch);
    }
    let d = model.dim();
    if control.dim() != d {
        return Err(SdeError::DimensionMismatch("control dimension != model dimension"));
    }
    if let Some(aux) = &opts.aux {
        if aux.dim() != d {
            return Err(SdeError::DimensionMismatch("aux field dimension != model dimension"));
        }
    }
    let (max_steps, exit_interval) = match stopping {
        StoppingSpec::FixedHorizon => (grid.n_steps(), None),
        StoppingSpec::FirstExit { a, b, time_cap } => {
            if d != 1 {
                return Err(SdeError::InvalidStopping("first-exit stopping requires d = 1"));
            }
            if !(a < model.x_init()[0] && model.x_init()[0] < b) {
                return Err(SdeError::InvalidStopping("x_init must lie inside (a, b)"));
            }
            if !time_cap.is_finite() || time_cap <= 0.0 {
                return Err(SdeError::InvalidStopping("time cap must be positive and finite"));
            }
            if opts.store_paths {
                return Err(SdeError::PathStorageUnsupported);
            }
            ((time_cap / grid.dt()).round().max(1.0) as usize, Some((a, b)))
        }
    };

    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let zero_control = control.is_zero();

    let outcomes: Result<Vec<PathOutcome>, SdeError> = (0..k)
        .into_par_iter()
        .with_min_len(64)
        .map(|path| {
            let mut rng = substream(seed, path as u64);
            let mut x = model.x_init().to_vec();
            let mut x_new = vec![0.0; d];
            let mut dw = vec![0.0; d];
            let mut u_buf = vec![0.0; d];
            let mut aux_buf = vec![0.0; d];
            let mut drift_buf = vec![0.0; d];
            let mut sigma_scratch = match model.diffusion() {
                Diffusion::StateDependent(_) => vec![0.0; d * d],
                _ => Vec::new(),
            };
            let mut states = if opts.store_paths {
                let mut s = Vec::with_capacity((max_steps + 1) * d);
                s.extend_from_slice(&x);
                Some(s)
            } else {
                None
            };

            let mut running = 0.0;
            let mut log_girsanov = 0.0;
            let mut aux_sq = 0.0;
            let mut aux_dw = 0.0;
            let mut exit_time = f64::NAN;
            let mut capped = false;
            let mut exited = false;

            for step in 0..max_steps {
                let t = step as f64 * dt;
                for w in dw.iter_mut() {
                    *w = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
                }
                // x_new = x + (b + sigma u) dt + sigma dw
                model.drift_into(&x, t, &mut drift_buf);
                for i in 0..d {
                    x_new[i] = x[i] + drift_buf[i] * dt;
                }
                if !zero_control {
                    control.evaluate(&x, t, &mut u_buf);
                    u_buf.iter_mut().for_each(|u| *u *= dt);
                    model
                        .diffusion()
                        .apply_add(&x, t, &u_buf, &mut x_new, &mut sigma_scratch);
                    u_buf.iter_mut().for_each(|u| *u /= dt);
                }
                model
                    .diffusion()
                    .apply_add(&x, t, &dw, &mut x_new, &mut sigma_scratch);

                if x_new.iter().any(|v| !v.is_finite()) {
                    return Err(SdeError::BlowUp { path, step, t });
                }

                // log dP/dP^u += -u . dW - |u|^2 dt / 2, with the dW
                // that produced this step. Exactly zero for u = 0.
                if !zero_control {
                    let mut udw = 0.0;
                    let mut uu = 0.0;
                    for i in 0..d {
                        udw += u_buf[i] * dw[i];
                        uu += u_buf[i] * u_buf[i];
                    }
                    log_girsanov += -udw - 0.5 * uu * dt;
                }
                if let Some(aux) = &opts.aux {
                    aux.evaluate(&x, t, &mut aux_buf);
                    let mut adw = 0.0;
                    let mut aa = 0.0;
                    for i in 0..d {
                        adw += aux_buf[i] * dw[i];
                        aa += aux_buf[i] * aux_buf[i];
                    }
                    aux_dw += adw;
                    aux_sq += aa * dt;
                }

                if let Some((a, b)) = exit_interval {
                    if x_new[0] <= a || x_new[0] >= b {
                        let boundary = if x_new[0] <= a { a } else { b };
                        let frac = if x_new[0] == x[0] {
                            1.0
                        } else {
                            ((boundary - x[0]) / (x_new[0] - x[0])).clamp(0.0, 1.0)
                        };
                        running += cost.running_at(&x, t) * frac * dt;
                        exit_time = t + frac * dt;
                        x_new[0] = boundary;
                        exited = true;
                    }
                }
                if !exited && cost.has_running() {
                    running += cost.running_at(&x, t) * dt;
                }

                std::mem::swap(&mut x, &mut x_new);
                if let Some(s) = states.as_mut() {
                    s.extend_from_slice(&x);
                }
                if exited {
                    break;
                }
            }

            if exit_interval.is_some() && !exited {
                capped = true;
                exit_time = max_steps as f64 * dt;
            }
            let terminal = cost.terminal_at(&x);
            Ok(PathOutcome {
                running,
                terminal,
                log_girsanov,
                exit_time,
                capped,
                aux_sq,
                aux_dw,
                states,
            })
        })
        .collect();
    let outcomes = outcomes?;

    let mut batch = PathBatch {
        k,
        running_cost: Vec::with_capacity(k),
        terminal_cost: Vec::with_capacity(k),
        log_girsanov: Vec::with_capacity(k),
        exit_time: exit_interval.map(|_| Vec::with_capacity(k)),
        aux_sq_integral: opts.aux.as_ref().map(|_| Vec::with_capacity(k)),
        aux_brownian_integral: opts.aux.as_ref().map(|_| Vec::with_capacity(k)),
        stored_paths: opts.store_paths.then(Vec::new),
        incomplete: Vec::new(),
    };
    for (i, o) in outcomes.into_iter().enumerate() {
        batch.running_cost.push(o.running);
        batch.terminal_cost.push(o.terminal);
        batch.log_girsanov.push(o.log_girsanov);
        if let Some(v) = batch.exit_time.as_mut() {
            v.push(o.exit_time);
        }
        if let Some(v) = batch.aux_sq_integral.as_mut() {
            v.push(o.aux_sq);
        }
        if let Some(v) = batch.aux_brownian_integral.as_mut() {
            v.push(o.aux_dw);
        }
        if let (Some(store), Some(s)) = (batch.stored_paths.as_mut(), o.states) {
            store.extend_from_slice(&s);
        }
        if o.capped {
            batch.incomplete.push(i);
        }
    }
    Ok(batch)
}

/// Control selector for the scaled-Brownian-motion exit problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitControl {
    /// `u = 0`.
    Naive,
    /// `u = u*`, the zero-variance control `sqrt(2) tanh(x)`.
    Optimal,
    /// `u = u* + eps`.
    Perturbed,
    /// `u = 2u* - u = u* - eps`, the process whose exit time enters the
    /// exact relative-error formula.
    Reflected,
}

/// Simulates the exit problem `X = sqrt(2) W` on a symmetric domain
/// `(-a, a)` started at `x = 0`, with `f = 1, g = 0` (the payoff per
/// path is `exp(-tau)`) under one of the [`ExitControl`] variants.
pub fn brownian_exit_simulate(
    eps: f64,
    which: ExitControl,
    stopping: StoppingSpec,
    dt: f64,
    k: usize,
    seed: u64,
) -> Result<PathBatch, SdeError> {
    let (a, b, time_cap) = match stopping {
        StoppingSpec::FirstExit { a, b, time_cap } => (a, b, time_cap),
        StoppingSpec::FixedHorizon => {
            return Err(SdeError::InvalidStopping("exit simulation requires first-exit mode"))
        }
    };
    if (a + b).abs() > 1e-12 {
        return Err(SdeError::InvalidStopping(
            "the closed-form optimal control assumes a symmetric domain (-a, a)",
        ));
    }
    let model = SdeModel::new(
        vec![0.0],
        time_cap,
        |_x, _t, out: &mut [f64]| out[0] = 0.0,
        Diffusion::Scalar(std::f64::consts::SQRT_2),
    )?;
    let u_star = || {
        super::control::ControlField::from_fn(1, super::control::Provenance::Analytic, |x, _t, out| {
            out[0] = std::f64::consts::SQRT_2 * x[0].tanh();
        })
    };
    let control = match which {
        ExitControl::Naive => ControlField::zero(1),
        ExitControl::Optimal => u_star(),
        ExitControl::Perturbed => u_star().plus_constant(vec![eps]),
        ExitControl::Reflected => u_star().plus_constant(vec![-eps]),
    };
    let grid = TimeGrid::from_dt(time_cap, dt)?;
    simulate_controlled(
        &model,
        &control,
        &CostFunctional::constant_running(1.0),
        &grid,
        stopping,
        k,
        seed,
        &SimOptions::default(),
    )
}
