//! Experiment configuration: registry names, defaults, file parsing.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use super::HarnessError;

/// The experiment registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    /// d-dimensional linear dynamics, constant control perturbation.
    OuPerturbation,
    /// Same dynamics, perturbation active only on a leading time window.
    OuWindowed,
    /// Double well, uncontrolled estimator across well depths.
    DoubleWellNaive,
    /// Double well, multiplicatively scaled optimal control.
    DoubleWellMultiplicative,
    /// Double well, sine-in-time perturbation of the optimal control.
    DoubleWellSineTime,
    /// Double well, sine-in-space perturbation of the optimal control.
    DoubleWellSineSpace,
    /// Exit-time problem on a symmetric interval.
    HittingSweep,
    /// Small-noise diffusion, zero-viscosity control across noise levels.
    SmallNoiseEta,
    /// Small-noise diffusion, zero-viscosity control across horizons.
    SmallNoiseT,
    /// Shifted-Gaussian proposal across dimensions.
    GaussianDimSweep,
}

pub const ALL_EXPERIMENTS: [ExperimentKind; 10] = [
    ExperimentKind::OuPerturbation,
    ExperimentKind::OuWindowed,
    ExperimentKind::DoubleWellNaive,
    ExperimentKind::DoubleWellMultiplicative,
    ExperimentKind::DoubleWellSineTime,
    ExperimentKind::DoubleWellSineSpace,
    ExperimentKind::HittingSweep,
    ExperimentKind::SmallNoiseEta,
    ExperimentKind::SmallNoiseT,
    ExperimentKind::GaussianDimSweep,
];

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::OuPerturbation => "ou_perturbation",
            ExperimentKind::OuWindowed => "ou_windowed",
            ExperimentKind::DoubleWellNaive => "doublewell_naive",
            ExperimentKind::DoubleWellMultiplicative => "doublewell_multiplicative",
            ExperimentKind::DoubleWellSineTime => "doublewell_sine_time",
            ExperimentKind::DoubleWellSineSpace => "doublewell_sine_space",
            ExperimentKind::HittingSweep => "hitting_sweep",
            ExperimentKind::SmallNoiseEta => "smallnoise_eta",
            ExperimentKind::SmallNoiseT => "smallnoise_T",
            ExperimentKind::GaussianDimSweep => "gaussian_dim_sweep",
        }
    }

    /// Bound/formula columns emitted after `swept_value,estimate,stderr`.
    pub fn bound_columns(&self) -> &'static [&'static str] {
        match self {
            ExperimentKind::OuPerturbation | ExperimentKind::OuWindowed => {
                &["exact", "kl_lower", "holder_upper"]
            }
            ExperimentKind::DoubleWellNaive | ExperimentKind::DoubleWellMultiplicative => &[],
            ExperimentKind::DoubleWellSineTime => &["exact", "kl_lower"],
            ExperimentKind::DoubleWellSineSpace => &["kl_lower"],
            ExperimentKind::HittingSweep => {
                &["exact", "exact_stderr", "jensen_lower", "naive_wrong"]
            }
            ExperimentKind::SmallNoiseEta => &["r_pde", "gap_sup", "exp_l2"],
            ExperimentKind::SmallNoiseT => &["r_pde", "exp_l2"],
            ExperimentKind::GaussianDimSweep => &["exact", "kl_lower"],
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ALL_EXPERIMENTS
            .iter()
            .find(|k| k.name() == s)
            .copied()
            .ok_or_else(|| HarnessError::UnknownExperiment(s.to_string()))
    }
}

/// Full parameterization of one experiment run. Field names double as
/// config-file keys (`key = value`, one per line, `#` comments).
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    /// Sample count per sweep value.
    pub k: usize,
    pub n_steps: usize,
    /// Name of the swept parameter (experiment-specific).
    pub sweep_param: String,
    pub sweep_values: Vec<f64>,
    pub d: usize,
    pub t_final: f64,
    pub kappa: f64,
    pub rho: f64,
    /// Payoff scale for the small-noise problem; sine frequency for the
    /// sine-perturbation experiments.
    pub alpha: f64,
    pub eta: f64,
    pub eps: f64,
    pub zeta: f64,
    /// Half width of the symmetric exit domain `(-a, a)`.
    pub a: f64,
    /// Standard deviation of the random matrix entries of the linear model.
    pub sigma: f64,
    /// Active window length for the windowed perturbation.
    pub window: f64,
    pub x0: f64,
    /// Step size for exit-time simulation.
    pub dt: f64,
    pub time_cap: f64,
    pub out_dir: PathBuf,
    /// Paper-scale sampling (k = 10^6) instead of the desk-scale default.
    pub full: bool,
}

impl ExperimentConfig {
    /// Defaults for a registry entry.
    pub fn defaults(experiment: ExperimentKind) -> Self {
        let mut cfg = Self {
            experiment,
            seed: 42,
            k: 100_000,
            n_steps: 200,
            sweep_param: "eps".to_string(),
            sweep_values: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            d: 1,
            t_final: 1.0,
            kappa: 1.0,
            rho: 1.0,
            alpha: 1.0,
            eta: 0.1,
            eps: 0.3,
            zeta: 1.0,
            a: 1.0,
            sigma: 1.0,
            window: 0.2,
            x0: 0.0,
            dt: 1e-4,
            time_cap: 100.0,
            out_dir: PathBuf::from("."),
            full: false,
        };
        match experiment {
            ExperimentKind::OuPerturbation => {}
            ExperimentKind::OuWindowed => {
                cfg.d = 2;
            }
            ExperimentKind::DoubleWellNaive => {
                cfg.sweep_param = "kappa".into();
                cfg.sweep_values = vec![0.5, 1.0, 2.0, 3.0];
                cfg.n_steps = 500;
                cfg.x0 = -1.0;
            }
            ExperimentKind::DoubleWellMultiplicative => {
                cfg.sweep_param = "zeta".into();
                cfg.sweep_values = vec![0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4];
                cfg.n_steps = 1000;
                cfg.x0 = -1.0;
                cfg.k = 20_000;
            }
            ExperimentKind::DoubleWellSineTime | ExperimentKind::DoubleWellSineSpace => {
                cfg.sweep_values = vec![0.25, 0.5, 1.0];
                cfg.alpha = 50.0;
                cfg.n_steps = 1000;
                cfg.x0 = -1.0;
                cfg.k = 50_000;
            }
            ExperimentKind::HittingSweep => {
                cfg.sweep_values = vec![0.25, 0.5, 0.75, 1.0];
                cfg.k = 10_000;
            }
            ExperimentKind::SmallNoiseEta => {
                cfg.sweep_param = "eta".into();
                cfg.sweep_values = vec![0.5, 0.1, 0.05, 0.01];
                cfg.x0 = 0.1;
                cfg.k = 50_000;
                cfg.n_steps = 1000;
            }
            ExperimentKind::SmallNoiseT => {
                cfg.sweep_param = "t_final".into();
                cfg.sweep_values = vec![0.5, 1.0, 2.0, 4.0];
                cfg.eta = 0.005;
                cfg.x0 = 0.1;
                cfg.k = 50_000;
                cfg.n_steps = 1000;
            }
            ExperimentKind::GaussianDimSweep => {
                cfg.sweep_param = "d".into();
                cfg.sweep_values = vec![1.0, 2.0, 4.0, 8.0, 16.0];
                cfg.eps = 0.1;
            }
        }
        cfg
    }

    /// Effective sample count (`--full` raises the default to paper scale).
    pub fn effective_k(&self) -> usize {
        if self.full {
            self.k.max(1_000_000)
        } else {
            self.k
        }
    }

    /// Applies one `key = value` override.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let bad = |what: &str| {
            HarnessError::InvalidConfig(format!("cannot parse '{value}' as {what} for key '{key}'"))
        };
        match key {
            "experiment" => self.experiment = value.parse()?,
            "seed" => self.seed = value.parse().map_err(|_| bad("u64"))?,
            "k" => self.k = value.parse().map_err(|_| bad("usize"))?,
            "n_steps" => self.n_steps = value.parse().map_err(|_| bad("usize"))?,
            "sweep_param" => self.sweep_param = value.to_string(),
            "sweep_values" => {
                self.sweep_values = value
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad("comma-separated floats"))?;
            }
            "d" => self.d = value.parse().map_err(|_| bad("usize"))?,
            "t_final" => self.t_final = value.parse().map_err(|_| bad("f64"))?,
            "kappa" => self.kappa = value.parse().map_err(|_| bad("f64"))?,
            "rho" => self.rho = value.parse().map_err(|_| bad("f64"))?,
            "alpha" => self.alpha = value.parse().map_err(|_| bad("f64"))?,
            "eta" => self.eta = value.parse().map_err(|_| bad("f64"))?,
            "eps" => self.eps = value.parse().map_err(|_| bad("f64"))?,
            "zeta" => self.zeta = value.parse().map_err(|_| bad("f64"))?,
            "a" => self.a = value.parse().map_err(|_| bad("f64"))?,
            "sigma" => self.sigma = value.parse().map_err(|_| bad("f64"))?,
            "window" => self.window = value.parse().map_err(|_| bad("f64"))?,
            "x0" => self.x0 = value.parse().map_err(|_| bad("f64"))?,
            "dt" => self.dt = value.parse().map_err(|_| bad("f64"))?,
            "time_cap" => self.time_cap = value.parse().map_err(|_| bad("f64"))?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "full" => self.full = value.parse().map_err(|_| bad("bool"))?,
            _ => {
                return Err(HarnessError::InvalidConfig(format!(
                    "unknown config key '{key}'"
                )))
            }
        }
        Ok(())
    }

    /// Parses a config file body (`key = value` lines, `#` comments).
    pub fn apply_file(&mut self, body: &str) -> Result<(), HarnessError> {
        for (lineno, raw) in body.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::InvalidConfig(format!(
                    "line {}: expected 'key = value', got '{raw}'",
                    lineno + 1
                ))
            })?;
            self.apply_kv(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Basic validation shared by all experiments.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.k < 1 {
            return Err(HarnessError::InvalidConfig("k must be >= 1".into()));
        }
        if self.sweep_values.is_empty() {
            return Err(HarnessError::InvalidConfig("sweep_values must be nonempty".into()));
        }
        if self.t_final.is_nan() || self.t_final <= 0.0 {
            return Err(HarnessError::InvalidConfig("t_final must be positive".into()));
        }
        Ok(())
    }

    /// Deterministic one-line digest of every parameter; stored in the
    /// JSON summary so runs are auditable.
    pub fn digest(&self) -> String {
        let mut kv = BTreeMap::new();
        kv.insert("experiment", self.experiment.name().to_string());
        kv.insert("seed", self.seed.to_string());
        kv.insert("k", self.effective_k().to_string());
        kv.insert("n_steps", self.n_steps.to_string());
        kv.insert("sweep_param", self.sweep_param.clone());
        kv.insert(
            "sweep_values",
            self.sweep_values
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv.insert("d", self.d.to_string());
        kv.insert("t_final", self.t_final.to_string());
        kv.insert("kappa", self.kappa.to_string());
        kv.insert("rho", self.rho.to_string());
        kv.insert("alpha", self.alpha.to_string());
        kv.insert("eta", self.eta.to_string());
        kv.insert("eps", self.eps.to_string());
        kv.insert("zeta", self.zeta.to_string());
        kv.insert("a", self.a.to_string());
        kv.insert("sigma", self.sigma.to_string());
        kv.insert("window", self.window.to_string());
        kv.insert("x0", self.x0.to_string());
        kv.insert("dt", self.dt.to_string());
        kv.insert("time_cap", self.time_cap.to_string());
        kv.iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
