//! One runner per experiment; each returns in-memory tables and dumps.

use fracheat_core::heatkernel::TimeSpec;
use fracheat_core::renorm::{
    fit_asymptotics, l_kernel, radial_integral_estimate, wick_norm_growth, AsymptoticFit, DomainSpec, KernelKH,
    RenormTable, WickGrowthConfig,
};
use fracheat_core::seeding;
use fracheat_core::solver::{assemble_and_converge, picard_solve, stochastic_inputs, u_trajectory};
use fracheat_core::spectral_noise::{cauchy_decay, covariance_check, NoiseDraw, Probe};
use fracheat_core::{Error, SpectralMesh};
use rand::Rng;

use crate::config::{Experiment, ExperimentConfig};

/// A CSV file to be written: name, header and rows of cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(file: &str, header: &[&'static str]) -> Self {
        Self { file: file.into(), header: header.to_vec(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Cell at (row, column name).
    pub fn get(&self, row: usize, col: &str) -> Option<&str> {
        let c = self.header.iter().position(|h| *h == col)?;
        self.rows.get(row).map(|r| r[c].as_str())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub tables: Vec<Table>,
    /// (file name, NDJSON bytes)
    pub dumps: Vec<(String, Vec<u8>)>,
}

pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn point(p: &[f64]) -> String {
    p.iter().map(|v| num(*v)).collect::<Vec<_>>().join(";")
}

fn cfg_err(e: crate::config::ConfigError) -> Error {
    Error::Config(e.to_string())
}

/// Three probe pairs spread over the cutoff region.
pub fn default_probes(d: usize, t: f64) -> Vec<Probe> {
    let pt = |a: f64, b: f64| if d == 1 { vec![a] } else { vec![a, b] };
    vec![
        Probe { s: t, x: pt(0.0, 0.0), t, y: pt(0.0, 0.0) },
        Probe { s: 0.5 * t, x: pt(-0.3, 0.2), t, y: pt(0.4, -0.1) },
        Probe { s: t, x: pt(0.25, 0.5), t, y: pt(-0.5, 0.0) },
    ]
}

pub fn run(cfg: &ExperimentConfig) -> fracheat_core::Result<Artifacts> {
    match cfg.experiment {
        Experiment::NoiseCov => noise_cov(cfg),
        Experiment::SigmaAsymptotics => sigma_asymptotics(cfg),
        Experiment::WickGrowth => wick_growth(cfg),
        Experiment::CauchyDecay => cauchy(cfg),
        Experiment::SolveRegular | Experiment::SolveRough => solve(cfg),
        Experiment::ConvergeU => converge(cfg),
        Experiment::KernelChecks => kernel_checks(cfg),
    }
}

fn noise_cov(cfg: &ExperimentConfig) -> fracheat_core::Result<Artifacts> {
    let n = cfg.n_range[1];
    let mesh = SpectralMesh::build(&cfg.hurst, n, cfg.resolution)?;
    let res = covariance_check(&mesh, &default_probes(cfg.hurst.d, cfg.t), cfg.samples, cfg.seed)?;
    let mut t =
        Table::new("noise_cov.csv", &["probe", "n", "s", "x", "t", "y", "oracle", "mc_mean", "mc_stderr", "z_score"]);
    for (i, r) in res.iter().enumerate() {
        t.push(vec![
            i.to_string(),
            n.to_string(),
            num(r.probe.s),
            point(&r.probe.x),
            num(r.probe.t),
            point(&r.probe.y),
            num(r.oracle),
            num(r.estimate.mean),
            num(r.estimate.stderr),
            num(r.z_score()),
        ]);
    }
    Ok(Artifacts { tables: vec![t], dumps: vec![] })
}

fn sigma_asymptotics(cfg: &ExperimentConfig) -> fracheat_core::Result<Artifacts> {
    let levels = cfg.levels();
    let table = match RenormTable::build(&cfg.hurst, cfg.t, &levels, Some(cfg.resolution)) {
        Err(Error::Budget(_)) => RenormTable::build(&cfg.hurst, cfg.t, &levels, None)?,
        other => other?,
    };
    let fit = fit_asymptotics(&table)?;
    let mut t =
        Table::new("sigma_asymptotics.csv", &["section", "n", "sigma_continuum", "sigma_disc", "quantity", "value"]);
    for r in &table.rows {
        t.push(vec![
            "table".into(),
            r.n.to_string(),
            num(r.sigma_continuum),
            opt(r.sigma_disc),
            String::new(),
            String::new(),
        ]);
    }
    let mut fit_row =
        |q: &str, v: f64| t.push(vec!["fit".into(), String::new(), String::new(), String::new(), q.into(), num(v)]);
    match &fit {
        AsymptoticFit::Affine {
            slope,
            intercept,
            r_squared,
            normalized_slope,
            predicted_slope,
            relative_error,
            ..
        } => {
            fit_row("affine_slope", *slope);
            fit_row("affine_intercept", *intercept);
            fit_row("affine_r_squared", *r_squared);
            fit_row("normalized_slope", *normalized_slope);
            fit_row("predicted_slope", *predicted_slope);
            fit_row("relative_error", *relative_error);
        }
        AsymptoticFit::Geometric { kappa, constant, relative_spread, normalized_constant, normalized, constants } => {
            fit_row("kappa", *kappa);
            fit_row("geometric_constant", *constant);
            fit_row("relative_spread", *relative_spread);
            fit_row("normalized_constant", *normalized_constant);
            if let Some(c1) = constants.c1 {
                fit_row("c1", c1);
            }
            let k = normalized.len();
            if k >= 3 {
                fit_row("tail_drift", (normalized[k - 1] - normalized[k - 3]).abs() / normalized[k - 1]);
            }
        }
    }
    Ok(Artifacts { tables: vec![t], dumps: vec![] })
}

fn wick_growth(cfg: &ExperimentConfig) -> fracheat_core::Result<Artifacts> {
    let alpha = cfg.alpha.unwrap_or_default();
    let wcfg = WickGrowthConfig { t: cfg.t, grid: cfg.grid().map_err(cfg_err)?, resolution: cfg.resolution };
    let g =
        wick_norm_growth(&cfg.hurst, alpha, &cfg.levels(), cfg.samples, cfg.seed, &cfg.chi().map_err(cfg_err)?, &wcfg)?;
    let mut t = Table::new("wick_growth.csv", &["n", "alpha", "mc_mean", "mc_stderr", "exact", "trend", "factor"]);
    for (i, &n) in g.levels.iter().enumerate() {
        t.push(vec![
            n.to_string(),
            num(alpha),
            num(g.estimates[i].mean),
            num(g.estimates[i].stderr),
            num(g.exact[i]),
            g.trend().into(),
            num(g.overall_factor()),
        ]);
    }
    Ok(Artifacts { tables: vec![t], dumps: vec![] })
}

fn cauchy(cfg: &ExperimentConfig) -> fracheat_core::Result<Artifacts> {
    let s = cfg.s.unwrap_or_default();
    let mesh = SpectralMesh::build(&cfg.hurst, cfg.n_range[1] + 1, cfg.resolution)?;
    let c = cauchy_decay(
        &mesh,
        cfg.t,
        &cfg.grid().map_err(cfg_err)?,
        &cfg.chi().map_err(cfg_err)?,
        s,
        &cfg.levels(),
        Some((cfg.samples, cfg.seed)),
    )?;
    let mut t = Table::new(
        "cauchy_decay.csv",
        &["n", "s", "exact", "mc_mean", "mc_stderr", "log2_slope", "strictly_decreasing"],
    );
    for (i, &n) in c.levels.iter().enumerate() {
        let mc = c.monte_carlo.as_ref().map(|m| m[i]);
        t.push(vec![
            n.to_string(),
            num(s),
            num(c.exact[i]),
            opt(mc.map(|e| e.mean)),
            opt(mc.map(|e| e.stderr)),
            num(c.log2_slope),
            c.strictly_decreasing().to_string(),
        ]);
    }
    Ok(Artifacts { tables: vec![t], dumps: vec![] })
}

fn solve(cfg: &ExperimentConfig) -> fracheat_core::Result<Artifacts> {
    let scfg = cfg.solver_config().map_err(cfg_err)?;
    let n = cfg.n_range[1];
    let mesh = SpectralMesh::build(&cfg.hurst, n, cfg.resolution)?;
    let draw = NoiseDraw::generate(&mesh, seeding::sample_seed(cfg.seed, 0));
    let (psi, psi2) = stochastic_inputs(&draw, &scfg, &scfg.times())?;
    let (state, t0) = picard_solve(&scfg, &psi, psi2.as_ref())?;
    let mut t = Table::new(
        &format!("{}.csv", cfg.experiment.name().replace('-', "_")),
        &[
            "n",
            "regime",
            "alpha",
            "beta",
            "p",
            "horizon_requested",
            "horizon",
            "iterations",
            "residual",
            "sup_norm",
            "weighted_norm",
        ],
    );
    t.push(vec![
        n.to_string(),
        format!("{:?}", scfg.regime).to_lowercase(),
        num(scfg.alpha),
        num(scfg.beta),
        num(scfg.p),
        num(scfg.horizon),
        num(t0),
        state.iterations.to_string(),
        num(state.residual),
        num(state.sup_norm),
        opt(state.weighted_norm),
    ]);
    let mut hist = Table::new("picard_history.csv", &["iteration", "residual"]);
    for (i, r) in state.residual_history.iter().enumerate() {
        hist.push(vec![(i + 1).to_string(), num(*r)]);
    }
    let mut v_dump = Vec::new();
    state.v.write_ndjson(&mut v_dump).map_err(|e| Error::Config(e.to_string()))?;
    let mut u_dump = Vec::new();
    u_trajectory(&state, &psi).write_ndjson(&mut u_dump).map_err(|e| Error::Config(e.to_string()))?;
    Ok(Artifacts { tables: vec![t, hist], dumps: vec![("v.ndjson".into(), v_dump), ("u.ndjson".into(), u_dump)] })
}

fn converge(cfg: &ExperimentConfig) -> fracheat_core::Result<Artifacts> {
    let scfg = cfg.solver_config().map_err(cfg_err)?;
    let rep = assemble_and_converge(
        &scfg,
        &cfg.hurst,
        &cfg.levels(),
        cfg.resolution,
        &cfg.chi().map_err(cfg_err)?,
        cfg.samples,
        cfg.seed,
    )?;
    let mut t = Table::new(
        "converge_u.csv",
        &["n_lo", "n_hi", "norm", "mean", "stderr", "median", "common_horizon", "strictly_decreasing"],
    );
    let norm = match scfg.regime {
        fracheat_core::Regime::Regular => format!("W^{{{},{}}}", scfg.beta, scfg.p),
        fracheat_core::Regime::Rough => format!("W^{{-{},{}}}", scfg.alpha, scfg.p),
    };
    for (i, e) in rep.differences.iter().enumerate() {
        t.push(vec![
            rep.levels[i].to_string(),
            rep.levels[i + 1].to_string(),
            norm.clone(),
            num(e.mean),
            num(e.stderr),
            num(rep.median_differences[i]),
            num(rep.common_horizon),
            rep.strictly_decreasing().to_string(),
        ]);
    }
    let mut lv = Table::new("converge_levels.csv", &["n", "horizon", "max_iterations", "error"]);
    for s in &rep.solves {
        lv.push(vec![
            s.n.to_string(),
            opt(s.horizon),
            s.max_iterations.to_string(),
            s.error.clone().unwrap_or_default(),
        ]);
    }
    Ok(Artifacts { tables: vec![t, lv], dumps: vec![] })
}

/// Largest L/K^H ratio over `samples` random η in the square [−2ⁿ, 2ⁿ]².
pub fn kernel_bound_ratio(h: [f64; 3], n: u32, samples: usize, seed: u64) -> fracheat_core::Result<f64> {
    let k = KernelKH::new(h)?;
    let mut rng = seeding::stream_rng(seed, 0);
    let r = 2f64.powi(n as i32);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let eta = [rng.gen_range(-r..r), rng.gen_range(-r..r)];
        if eta[0] == 0.0 || eta[1] == 0.0 {
            continue;
        }
        let v = l_kernel(h, (DomainSpec::Level(n), DomainSpec::Level(n)), (TimeSpec::At(1.0), TimeSpec::At(1.0)), eta)?;
        worst = worst.max(v.abs() / k.eval(eta));
    }
    Ok(worst)
}

fn kernel_checks(cfg: &ExperimentConfig) -> fracheat_core::Result<Artifacts> {
    let h: [f64; 3] = cfg.hurst.h.clone().try_into().map_err(|_| Error::UnsupportedDimension(cfg.hurst.d))?;
    let alpha = cfg.alpha.unwrap_or_default();
    let n = cfg.n_range[1];
    let samples = cfg.samples.max(1000);
    let mut t = Table::new("kernel_checks.csv", &["check", "parameter", "value"]);
    let ratio = kernel_bound_ratio(h, n, samples, cfg.seed)?;
    t.push(vec!["kernel_bound".into(), "n".into(), n.to_string()]);
    t.push(vec!["kernel_bound".into(), "samples".into(), samples.to_string()]);
    t.push(vec!["kernel_bound".into(), "max_ratio".into(), num(ratio)]);
    let rep = radial_integral_estimate(h, h, alpha, &cfg.radii)?;
    for (r, v) in rep.radii.iter().zip(&rep.values) {
        t.push(vec!["radial_integral".into(), format!("R={}", num(*r)), num(*v)]);
    }
    t.push(vec!["radial_integral".into(), "final_increment".into(), num(rep.final_increment)]);
    t.push(vec!["radial_integral".into(), "saturated".into(), rep.saturated.to_string()]);
    Ok(Artifacts { tables: vec![t], dumps: vec![] })
}
