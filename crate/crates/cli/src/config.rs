//! Experiment configuration: TOML in, validated [`ExperimentConfig`] out.

use std::fmt;
use std::str::FromStr;

use fracheat_core::spectral_noise::RegimeTag;
use fracheat_core::{CutoffFn, Grid, HurstVector, Regime, SolverConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("hurst: {0}")]
    InvalidHurst(String),
    #[error("hurst: regime mismatch: {0}")]
    RegimeMismatch(String),
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    NoiseCov,
    SigmaAsymptotics,
    WickGrowth,
    CauchyDecay,
    SolveRegular,
    SolveRough,
    ConvergeU,
    KernelChecks,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::NoiseCov,
        Experiment::SigmaAsymptotics,
        Experiment::WickGrowth,
        Experiment::CauchyDecay,
        Experiment::SolveRegular,
        Experiment::SolveRough,
        Experiment::ConvergeU,
        Experiment::KernelChecks,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::NoiseCov => "noise-cov",
            Experiment::SigmaAsymptotics => "sigma-asymptotics",
            Experiment::WickGrowth => "wick-growth",
            Experiment::CauchyDecay => "cauchy-decay",
            Experiment::SolveRegular => "solve-regular",
            Experiment::SolveRough => "solve-rough",
            Experiment::ConvergeU => "converge-u",
            Experiment::KernelChecks => "kernel-checks",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| invalid("experiment", format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub points: usize,
    pub half_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub horizon: f64,
    pub dt: f64,
}

/// Radial cutoff centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffSpec {
    pub inner: f64,
    pub outer: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub picard: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { picard: 1e-10, max_iter: 200, max_halvings: 12 }
    }
}

/// Document as written; everything but `experiment` and `hurst` optional.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Experiment,
    hurst: Vec<f64>,
    n: Option<u32>,
    n_range: Option<[u32; 2]>,
    samples: Option<usize>,
    seed: Option<u64>,
    resolution: Option<usize>,
    t: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    p: Option<f64>,
    s: Option<f64>,
    radii: Option<Vec<f64>>,
    output: Option<String>,
    grid: Option<GridSpec>,
    time: Option<TimeGrid>,
    cutoff: Option<CutoffSpec>,
    rho: Option<CutoffSpec>,
    tolerances: Option<Tolerances>,
}

/// Validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub hurst: HurstVector,
    pub n_range: [u32; 2],
    pub samples: usize,
    pub seed: u64,
    pub resolution: usize,
    pub t: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    pub radii: Vec<f64>,
    pub output: String,
    pub grid: GridSpec,
    pub time: TimeGrid,
    pub cutoff: CutoffSpec,
    pub rho: CutoffSpec,
    pub tolerances: Tolerances,
}

fn default_grid(d: usize) -> GridSpec {
    match d {
        1 => GridSpec { points: 1024, half_width: 4.0 },
        _ => GridSpec { points: 256, half_width: 4.0 },
    }
}

fn default_samples(e: Experiment) -> usize {
    match e {
        Experiment::NoiseCov => 4000,
        Experiment::WickGrowth => 200,
        Experiment::CauchyDecay => 100,
        Experiment::ConvergeU => 100,
        _ => 1,
    }
}

fn unknown_key(msg: &str) -> Option<String> {
    let rest = &msg[msg.find("unknown field `")? + "unknown field `".len()..];
    Some(rest[..rest.find('`')?].to_string())
}

/// Parses and validates a TOML document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        match unknown_key(&msg) {
            Some(k) => ConfigError::UnknownKey(k),
            None => ConfigError::Syntax(msg),
        }
    })?;
    let hurst = HurstVector::new(raw.hurst.clone()).map_err(|e| ConfigError::InvalidHurst(inner_message(&e)))?;
    let d = hurst.d;
    let n_range = match (raw.n, raw.n_range) {
        (Some(_), Some(_)) => return Err(invalid("n", "give either n or n_range, not both")),
        (Some(n), None) => [n, n],
        (None, Some(r)) => r,
        (None, None) => match raw.experiment {
            Experiment::SigmaAsymptotics => [2, 10],
            Experiment::WickGrowth | Experiment::CauchyDecay => [2, 7],
            Experiment::ConvergeU => [2, 6],
            Experiment::KernelChecks => [3, 3],
            _ => [4, 4],
        },
    };
    let cfg = ExperimentConfig {
        experiment: raw.experiment,
        n_range,
        samples: raw.samples.unwrap_or_else(|| default_samples(raw.experiment)),
        seed: raw.seed.unwrap_or(1),
        resolution: raw.resolution.unwrap_or(8),
        t: raw.t.unwrap_or(1.0),
        alpha: raw.alpha,
        beta: raw.beta,
        p: raw.p.unwrap_or(2.0),
        s: raw.s,
        radii: raw.radii.unwrap_or_else(|| vec![4.0, 8.0, 16.0, 32.0]),
        output: raw.output.unwrap_or_else(|| format!("out/{}", raw.experiment)),
        grid: raw.grid.unwrap_or_else(|| default_grid(d)),
        time: raw.time.unwrap_or(TimeGrid { horizon: 0.25, dt: 0.0125 }),
        cutoff: raw.cutoff.unwrap_or(CutoffSpec { inner: 0.5, outer: 1.0 }),
        rho: raw.rho.unwrap_or(CutoffSpec { inner: 1.0, outer: 1.8 }),
        tolerances: raw.tolerances.unwrap_or_default(),
        hurst,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn inner_message(e: &fracheat_core::Error) -> String {
    match e {
        fracheat_core::Error::Domain(m) | fracheat_core::Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

fn describe_tags(h: &HurstVector) -> String {
    let tags = h.tags();
    if tags.is_empty() {
        "untagged".into()
    } else {
        tags.iter().map(|t| format!("{t:?}")).collect::<Vec<_>>().join("+")
    }
}

impl ExperimentConfig {
    /// Default configuration of an experiment for a given Hurst vector.
    pub fn default_for(experiment: Experiment, hurst: &[f64]) -> Result<Self, ConfigError> {
        let h = hurst.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ");
        let mut text = format!("experiment = \"{experiment}\"\nhurst = [{h}]\n");
        match experiment {
            Experiment::WickGrowth | Experiment::SolveRough | Experiment::ConvergeU => {
                if experiment != Experiment::ConvergeU
                    || HurstVector::new(hurst.to_vec()).is_ok_and(|h| !h.is_regular())
                {
                    text += if hurst.len() == 3 { "alpha = 0.32\n" } else { "alpha = 0.12\n" };
                }
            }
            Experiment::KernelChecks => text += "alpha = 0.32\n",
            Experiment::CauchyDecay => text += "s = -0.12\n",
            _ => {}
        }
        parse_config(&text)
    }

    /// Preset Hurst vector used when a subcommand runs without a file.
    pub fn preset(experiment: Experiment) -> Result<Self, ConfigError> {
        let h: &[f64] = match experiment {
            Experiment::NoiseCov | Experiment::SolveRegular | Experiment::ConvergeU => &[0.7, 0.6],
            Experiment::SigmaAsymptotics => &[0.25, 0.5],
            Experiment::WickGrowth => &[0.2, 0.3],
            Experiment::CauchyDecay | Experiment::SolveRough => &[0.35, 0.2],
            Experiment::KernelChecks => &[0.45, 0.4, 0.4],
        };
        Self::default_for(experiment, h)
    }

    pub fn levels(&self) -> Vec<u32> {
        (self.n_range[0]..=self.n_range[1]).collect()
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        Grid::new(self.hurst.d, self.grid.points, self.grid.half_width).map_err(|e| invalid("grid", inner_message(&e)))
    }

    pub fn chi(&self) -> Result<CutoffFn, ConfigError> {
        CutoffFn::centered(self.hurst.d, self.cutoff.inner, self.cutoff.outer)
            .map_err(|e| invalid("cutoff", inner_message(&e)))
    }

    /// Regime the solver experiments run in.
    pub fn regime(&self) -> Regime {
        match self.experiment {
            Experiment::SolveRegular => Regime::Regular,
            Experiment::SolveRough => Regime::Rough,
            _ if self.hurst.is_regular() => Regime::Regular,
            _ => Regime::Rough,
        }
    }

    pub fn solver_config(&self) -> Result<SolverConfig, ConfigError> {
        let grid = self.grid()?;
        let rho = CutoffFn::centered(self.hurst.d, self.rho.inner, self.rho.outer)
            .map_err(|e| invalid("rho", inner_message(&e)))?;
        let regime = self.regime();
        let mut cfg = SolverConfig::new(regime, &self.hurst, self.alpha.unwrap_or(0.0), grid, rho)
            .map_err(|e| invalid(if regime == Regime::Rough { "alpha" } else { "hurst" }, inner_message(&e)))?;
        cfg.p = self.p;
        if let Some(b) = self.beta {
            cfg.beta = b;
        }
        cfg.horizon = self.time.horizon;
        cfg.dt = self.time.dt;
        cfg.tol = self.tolerances.picard;
        cfg.max_iter = self.tolerances.max_iter;
        cfg.max_halvings = self.tolerances.max_halvings;
        cfg.validate(Some(&self.hurst)).map_err(|e| {
            let m = inner_message(&e);
            let key = if m.starts_with("beta") || m.contains("beta =") {
                "beta"
            } else if m.starts_with("horizon") || m.starts_with("dt") {
                "time"
            } else if m.starts_with('p') {
                "p"
            } else {
                "alpha"
            };
            invalid(key, m)
        })?;
        Ok(cfg)
    }

    fn require_alpha(&self) -> Result<f64, ConfigError> {
        match self.alpha {
            Some(a) if a > 0.0 => Ok(a),
            Some(a) => Err(invalid("alpha", format!("must be positive, got {a}"))),
            None => Err(invalid("alpha", format!("required by {}", self.experiment))),
        }
    }

    /// Structural checks plus the regime requirements of the experiment.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let h = &self.hurst;
        let [lo, hi] = self.n_range;
        let cap = if h.d == 1 { 12 } else { 8 };
        if lo == 0 || lo > hi || hi > cap {
            return Err(invalid("n_range", format!("need 1 <= lo <= hi <= {cap} for d = {}, got [{lo}, {hi}]", h.d)));
        }
        if self.resolution == 0 {
            return Err(invalid("resolution", "must be positive"));
        }
        if !(self.t > 0.0 && self.t <= 1.0) {
            return Err(invalid("t", format!("must lie in (0,1], got {}", self.t)));
        }
        if self.p.is_nan() || self.p < 2.0 {
            return Err(invalid("p", format!("must be at least 2, got {}", self.p)));
        }
        if self.samples == 0 {
            return Err(invalid("samples", "must be positive"));
        }
        if self.seed > i64::MAX as u64 {
            return Err(invalid("seed", format!("must fit a TOML integer (<= {}), got {}", i64::MAX, self.seed)));
        }
        if self.output.is_empty() {
            return Err(invalid("output", "must not be empty"));
        }
        let grid = self.grid()?;
        self.chi()?.check_grid(&grid).map_err(|e| invalid("cutoff", inner_message(&e)))?;
        let mismatch = |need: &str| {
            Err(ConfigError::RegimeMismatch(format!(
                "experiment `{}` needs {need}; {:?} is {}",
                self.experiment,
                h.h,
                describe_tags(h)
            )))
        };
        match self.experiment {
            Experiment::NoiseCov => {}
            Experiment::SigmaAsymptotics => {
                if h.kappa() < 0.0 {
                    return mismatch("2H0 + sum H_i <= d");
                }
                if hi - lo + 1 < 5 {
                    return Err(invalid("n_range", "the asymptotic fit needs at least 5 levels"));
                }
            }
            Experiment::WickGrowth => {
                self.require_alpha()?;
            }
            Experiment::CauchyDecay => {
                if self.s.is_none() {
                    return Err(invalid("s", "required by cauchy-decay"));
                }
                if hi == cap {
                    return Err(invalid(
                        "n_range",
                        format!("cauchy-decay compares with level hi + 1, so hi must stay below {cap}"),
                    ));
                }
            }
            Experiment::SolveRegular => {
                if !h.is_regular() {
                    return mismatch("a Regular Hurst vector");
                }
                self.solver_config()?;
            }
            Experiment::SolveRough => {
                if !(h.is_rough_wick() || h.is_rough_2d()) {
                    return mismatch("a RoughWick or Rough2D Hurst vector");
                }
                self.require_alpha()?;
                self.solver_config()?;
            }
            Experiment::ConvergeU => {
                if !(h.is_regular() || h.is_rough_wick() || h.is_rough_2d()) {
                    return mismatch("a Regular, RoughWick or Rough2D Hurst vector");
                }
                if !h.is_regular() {
                    self.require_alpha()?;
                }
                self.solver_config()?;
            }
            Experiment::KernelChecks => {
                if !h.tags().contains(&RegimeTag::Rough2D) {
                    return mismatch("a Rough2D Hurst vector");
                }
                self.require_alpha()?;
                if self.radii.is_empty() {
                    return Err(invalid("radii", "must not be empty"));
                }
            }
        }
        Ok(())
    }

    /// Canonical TOML form.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// serialize(parse(text)).
pub fn normalize(text: &str) -> Result<String, ConfigError> {
    Ok(parse_config(text)?.to_toml())
}
