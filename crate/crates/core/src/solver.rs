//! Picard solver for the remainder equation
//! v_t = e^{tΔ}φ + ∫₀ᵗ e^{(t−τ)Δ}(ρ²v² + 2ρv·ψ + q)dτ,
//! with q = ψ² (regular regime) or a supplied Wick trajectory (rough regime).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding;
use crate::sobolev_grid::{CutoffFn, Grid, SobolevParams, SpectralOps};
use crate::spectral_noise::{
    psi_from_evaluator, sigma_disc_level, wick_square, Estimate, FieldKind, FieldTrajectory, HurstVector, NoiseDraw,
    PointSet, PsiEvaluator, SpectralMesh,
};
use crate::stats::median;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Regular,
    Rough,
}

/// Values above this are treated as blowup.
const BLOWUP: f64 = 1e100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub regime: Regime,
    pub alpha: f64,
    pub beta: f64,
    pub p: f64,
    /// Requested horizon T ≤ 1.
    pub horizon: f64,
    pub dt: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    pub grid: Grid,
    /// Initial datum on `grid`.
    pub phi: Vec<f64>,
    pub rho: CutoffFn,
    /// Factor in front of ρ²v² + 2ρvψ; 1 for the actual equation.
    pub coupling: f64,
}

impl SolverConfig {
    /// Defaults: α = 0 (regular) or the given α (rough), β at the middle of
    /// its window, p = 2, tol 1e−10, zero initial datum.
    pub fn new(regime: Regime, h: &HurstVector, alpha: f64, grid: Grid, rho: CutoffFn) -> Result<Self> {
        let p = 2.0;
        let beta = match regime {
            Regime::Regular => 0.5 * h.alpha_h(),
            Regime::Rough => beta_midpoint(alpha, grid.d, p),
        };
        let cfg = Self {
            regime,
            alpha: if regime == Regime::Regular { 0.0 } else { alpha },
            beta,
            p,
            horizon: 0.25,
            dt: 0.01,
            tol: 1e-10,
            max_iter: 200,
            max_halvings: 12,
            phi: vec![0.0; grid.len()],
            grid,
            rho,
            coupling: 1.0,
        };
        cfg.validate(Some(h))?;
        Ok(cfg)
    }

    /// Structural checks, plus the Hurst-dependent window checks when `h`
    /// is given.
    pub fn validate(&self, h: Option<&HurstVector>) -> Result<()> {
        let d = self.grid.d as f64;
        let bad = |m: String| Err(Error::Config(m));
        if !(self.horizon > 0.0 && self.horizon <= 1.0) {
            return bad(format!("horizon must lie in (0,1], got {}", self.horizon));
        }
        if !(self.dt > 0.0 && self.dt <= self.horizon) {
            return bad(format!("dt must lie in (0, horizon], got {}", self.dt));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return bad("tol must be positive and max_iter nonzero".into());
        }
        if !(self.p >= 2.0) {
            return bad(format!("p must be at least 2, got {}", self.p));
        }
        if self.phi.len() != self.grid.len() {
            return Err(Error::Incompatible(format!(
                "phi has {} values, grid has {}",
                self.phi.len(),
                self.grid.len()
            )));
        }
        self.rho.check_grid(&self.grid)?;
        if let Some(h) = h {
            if h.d != self.grid.d {
                return Err(Error::Incompatible(format!("Hurst dimension {} vs grid dimension {}", h.d, self.grid.d)));
            }
        }
        match self.regime {
            Regime::Regular => {
                if !(self.beta > 0.0) || d / (2.0 * self.p) >= 1.0 + self.beta / 2.0 {
                    return bad(format!("beta = {} violates 0 < beta, d/(2p) < 1 + beta/2", self.beta));
                }
                if let Some(h) = h {
                    if !h.is_regular() {
                        return bad(format!("regular solver needs alpha_H > 0, got {}", h.alpha_h()));
                    }
                    if self.beta >= h.alpha_h() {
                        return bad(format!("beta = {} must be below alpha_H = {}", self.beta, h.alpha_h()));
                    }
                }
            }
            Regime::Rough => {
                let a = self.alpha;
                let top = (2.0 - a - d / self.p).min(2.0 - 2.0 * a);
                if !(a > 0.0 && a < self.beta && self.beta < top) || d / (2.0 * self.p) >= 1.0 {
                    return bad(format!("(alpha, beta) = ({a}, {}) outside alpha < beta < {top}", self.beta));
                }
                if let Some(h) = h {
                    let (lo, hi) = if h.is_rough_2d() {
                        (2.0 - h.weighted_sum(), 0.5)
                    } else if h.is_rough_wick() {
                        (h.kappa(), 0.25)
                    } else {
                        return bad(format!("rough solver needs a rough Hurst vector, got {:?}", h.h));
                    };
                    if !(a > lo && a < hi) {
                        return bad(format!("alpha = {a} outside ({lo}, {hi})"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of time steps that fit in `horizon`.
    pub fn steps_for(&self, horizon: f64) -> usize {
        (horizon / self.dt + 1e-9).floor() as usize
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps_for(self.horizon)).map(|j| j as f64 * self.dt).collect()
    }
}

/// Middle of α < β < min(2 − α − d/p, 2 − 2α).
pub fn beta_midpoint(alpha: f64, d: usize, p: f64) -> f64 {
    0.5 * (alpha + (2.0 - alpha - d as f64 / p).min(2.0 - 2.0 * alpha))
}

/// Accepted Picard fixed point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverState {
    pub v: FieldTrajectory,
    /// sup_t ‖v_t‖ in W^{β,p} (regular) or W^{−α,p} (rough).
    pub sup_norm: f64,
    /// sup_{t ≥ dt} t^{(β+α)/2}‖v_t‖_{W^{β,p}}, rough regime only.
    pub weighted_norm: Option<f64>,
    pub iterations: usize,
    /// ‖v − Γ(v)‖_∞ / (1 + ‖v‖_∞).
    pub residual: f64,
    pub residual_history: Vec<f64>,
}

fn check_trajectory(tr: &FieldTrajectory, cfg: &SolverConfig, steps: usize, what: &str) -> Result<()> {
    if tr.grid != cfg.grid {
        return Err(Error::Incompatible(format!("{what} lives on a different grid")));
    }
    if tr.times.len() < steps + 1 {
        return Err(Error::Incompatible(format!("{what} has {} times, need {}", tr.times.len(), steps + 1)));
    }
    for (j, t) in tr.times.iter().take(steps + 1).enumerate() {
        if (t - j as f64 * cfg.dt).abs() > 1e-12 {
            return Err(Error::Incompatible(format!("{what} time {j} is {t}, expected {}", j as f64 * cfg.dt)));
        }
    }
    Ok(())
}

/// Exponential Euler propagation u_{j+1} = e^{dtΔ}u_j + dt·φ₁(dtΔ)f_j from
/// u_0 = φ; exact when f is constant in time.
fn duhamel(ops: &SpectralOps, phi: &[f64], forcing: &[Vec<f64>], dt: f64) -> Result<Vec<f64>> {
    let g = &ops.grid;
    let m = g.len();
    let decay: Vec<f64> = (0..m).map(|i| (-dt * g.k2(i)).exp()).collect();
    let phi1: Vec<f64> = (0..m)
        .map(|i| {
            let z = -dt * g.k2(i);
            if z == 0.0 {
                dt
            } else {
                dt * z.exp_m1() / z
            }
        })
        .collect();
    let mut out = Vec::with_capacity(m * (forcing.len() + 1));
    out.extend_from_slice(phi);
    let mut coeffs = ops.forward(phi);
    for (j, f) in forcing.iter().enumerate() {
        let fs = ops.forward(f);
        for i in 0..m {
            coeffs[i] = coeffs[i] * decay[i] + fs[i] * phi1[i];
        }
        let u = ops.inverse_real(coeffs.clone());
        if u.iter().any(|x| !(x.abs() < BLOWUP)) {
            return Err(Error::Blowup { step: j + 1 });
        }
        out.extend(u);
    }
    Ok(out)
}

fn gamma_map(
    ops: &SpectralOps,
    v: &FieldTrajectory,
    psi: &FieldTrajectory,
    source: Option<&FieldTrajectory>,
    cfg: &SolverConfig,
    steps: usize,
) -> Result<FieldTrajectory> {
    check_trajectory(v, cfg, steps, "v")?;
    check_trajectory(psi, cfg, steps, "psi")?;
    if let Some(s) = source {
        check_trajectory(s, cfg, steps, "psi2")?;
    }
    let rho = cfg.rho.sample(&cfg.grid);
    let c = cfg.coupling;
    let mut forcing = Vec::with_capacity(steps);
    for j in 0..steps {
        let (vj, pj) = (v.at(j), psi.at(j));
        let f: Vec<f64> = (0..cfg.grid.len())
            .map(|i| {
                let rv = rho[i] * vj[i];
                let q = match source {
                    Some(s) => s.at(j)[i],
                    None => pj[i] * pj[i],
                };
                c * (rv * rv + 2.0 * rv * pj[i]) + q
            })
            .collect();
        if f.iter().any(|x| !(x.abs() < BLOWUP)) {
            return Err(Error::Blowup { step: j });
        }
        forcing.push(f);
    }
    let times: Vec<f64> = (0..=steps).map(|j| j as f64 * cfg.dt).collect();
    let mut out = FieldTrajectory::zeros(FieldKind::V, v.n, &cfg.grid, &times);
    out.seed = psi.seed;
    out.values = duhamel(ops, &cfg.phi, &forcing, cfg.dt)?;
    Ok(out)
}

/// Γ_{T,Ψ}(v) over the full horizon of `cfg`; `psi` is ρΨ.
pub fn gamma_map_regular(v: &FieldTrajectory, psi: &FieldTrajectory, cfg: &SolverConfig) -> Result<FieldTrajectory> {
    if cfg.regime != Regime::Regular {
        return Err(Error::Config("gamma_map_regular needs the regular regime".into()));
    }
    gamma_map(&SpectralOps::new(&cfg.grid), v, psi, None, cfg, cfg.steps_for(cfg.horizon))
}

/// Γ_{T,Ψ,Ψ²}(v); `psi` is ρΨ and `psi2` is ρ² times the Wick square.
pub fn gamma_map_rough(
    v: &FieldTrajectory,
    psi: &FieldTrajectory,
    psi2: &FieldTrajectory,
    cfg: &SolverConfig,
) -> Result<FieldTrajectory> {
    if cfg.regime != Regime::Rough {
        return Err(Error::Config("gamma_map_rough needs the rough regime".into()));
    }
    gamma_map(&SpectralOps::new(&cfg.grid), v, psi, Some(psi2), cfg, cfg.steps_for(cfg.horizon))
}

fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn source_for<'a>(cfg: &SolverConfig, psi2: Option<&'a FieldTrajectory>) -> Result<Option<&'a FieldTrajectory>> {
    match (cfg.regime, psi2) {
        (Regime::Regular, None) => Ok(None),
        (Regime::Rough, Some(s)) => Ok(Some(s)),
        (Regime::Regular, Some(_)) => Err(Error::Config("regular regime takes no Wick trajectory".into())),
        (Regime::Rough, None) => Err(Error::Config("rough regime needs a Wick trajectory".into())),
    }
}

fn state_norms(ops: &SpectralOps, v: &FieldTrajectory, cfg: &SolverConfig) -> Result<(f64, Option<f64>)> {
    let mut sup = 0.0f64;
    let mut weighted: Option<f64> = None;
    for (j, &t) in v.times.iter().enumerate() {
        match cfg.regime {
            Regime::Regular => {
                sup = sup.max(ops.bessel_norm(v.at(j), SobolevParams::new(cfg.beta, cfg.p)?)?);
            }
            Regime::Rough => {
                sup = sup.max(ops.bessel_norm(v.at(j), SobolevParams::new(-cfg.alpha, cfg.p)?)?);
                if j > 0 {
                    let w = t.powf(0.5 * (cfg.beta + cfg.alpha))
                        * ops.bessel_norm(v.at(j), SobolevParams::new(cfg.beta, cfg.p)?)?;
                    weighted = Some(weighted.unwrap_or(0.0).max(w));
                }
            }
        }
    }
    if !sup.is_finite() || weighted.is_some_and(|w| !w.is_finite()) {
        return Err(Error::Blowup { step: v.times.len() });
    }
    Ok((sup, weighted))
}

fn picard_attempt(
    ops: &SpectralOps,
    cfg: &SolverConfig,
    psi: &FieldTrajectory,
    source: Option<&FieldTrajectory>,
    steps: usize,
) -> Result<SolverState> {
    let times: Vec<f64> = (0..=steps).map(|j| j as f64 * cfg.dt).collect();
    let mut v = FieldTrajectory::zeros(FieldKind::V, psi.n, &cfg.grid, &times);
    v.seed = psi.seed;
    let mut history = Vec::new();
    for it in 1..=cfg.max_iter {
        let g = gamma_map(ops, &v, psi, source, cfg, steps)?;
        let res = sup_diff(&g.values, &v.values) / (1.0 + sup_abs(&v.values));
        history.push(res);
        if res <= cfg.tol {
            let (sup_norm, weighted_norm) = state_norms(ops, &v, cfg)?;
            return Ok(SolverState {
                v,
                sup_norm,
                weighted_norm,
                iterations: it,
                residual: res,
                residual_history: history,
            });
        }
        if !res.is_finite() || res > 1e6 {
            return Err(Error::Blowup { step: steps });
        }
        v = g;
    }
    Err(Error::Accuracy { estimate: *history.last().unwrap(), partial: sup_abs(&v.values) })
}

/// Picard iteration from v = 0, halving the horizon on failure. Returns
/// the accepted state and the horizon T₀ it covers.
pub fn picard_solve(
    cfg: &SolverConfig,
    psi: &FieldTrajectory,
    psi2: Option<&FieldTrajectory>,
) -> Result<(SolverState, f64)> {
    cfg.validate(None)?;
    let source = source_for(cfg, psi2)?;
    let ops = SpectralOps::new(&cfg.grid);
    let mut horizon = cfg.horizon;
    let mut last = String::new();
    for _ in 0..=cfg.max_halvings {
        let steps = cfg.steps_for(horizon);
        if steps == 0 {
            last = format!("horizon {horizon} is below one time step");
            break;
        }
        match picard_attempt(&ops, cfg, psi, source, steps) {
            Ok(state) => return Ok((state, steps as f64 * cfg.dt)),
            Err(e @ Error::Incompatible(_)) => return Err(e),
            Err(e) => last = e.to_string(),
        }
        horizon *= 0.5;
    }
    Err(Error::NoLocalSolution { halvings: cfg.max_halvings, last })
}

/// u = v + ψ; equals v + Ψ wherever ρ = 1.
pub fn u_trajectory(state: &SolverState, psi: &FieldTrajectory) -> FieldTrajectory {
    let mut u = state.v.clone();
    u.kind = FieldKind::U;
    let m = u.grid.len();
    for (a, b) in u.values.iter_mut().zip(&psi.values[..state.v.times.len() * m]) {
        *a += b;
    }
    u
}

/// Precomputed Ψ tables and σ_n values for one truncation level, reused
/// across draws.
#[derive(Debug, Clone)]
pub struct InputSynthesizer<'m> {
    evaluator: PsiEvaluator<'m>,
    sigmas: Option<Vec<f64>>,
    support: Vec<usize>,
    rho: Vec<f64>,
    grid: Grid,
}

impl<'m> InputSynthesizer<'m> {
    pub fn new(mesh: &'m SpectralMesh, level: u32, cfg: &SolverConfig, times: &[f64]) -> Result<Self> {
        let grid = cfg.grid.clone();
        if mesh.d != grid.d {
            return Err(Error::Incompatible(format!("mesh dimension {} vs grid dimension {}", mesh.d, grid.d)));
        }
        let support = cfg.rho.support(&grid);
        let evaluator = PsiEvaluator::new(mesh, level, times, PointSet::from_grid(&grid, &support))?;
        let sigmas = match cfg.regime {
            Regime::Regular => None,
            Regime::Rough => Some(times.iter().map(|&t| sigma_disc_level(mesh, level, t)).collect::<Result<Vec<_>>>()?),
        };
        Ok(Self { evaluator, sigmas, support, rho: cfg.rho.sample(&grid), grid })
    }

    /// ρΨ_n, and in the rough regime also ρ²(Ψ_n² − σ_n).
    pub fn inputs(&self, draw: &NoiseDraw) -> Result<(FieldTrajectory, Option<FieldTrajectory>)> {
        let mut psi = psi_from_evaluator(&self.evaluator, draw, &self.grid, &self.support)?;
        let nt = psi.times.len();
        let wick = match &self.sigmas {
            None => None,
            Some(sig) => {
                let mut w = wick_square(&psi, sig)?;
                for j in 0..nt {
                    for (x, r) in w.at_mut(j).iter_mut().zip(&self.rho) {
                        *x *= r * r;
                    }
                }
                Some(w)
            }
        };
        for j in 0..nt {
            for (x, r) in psi.at_mut(j).iter_mut().zip(&self.rho) {
                *x *= r;
            }
        }
        Ok((psi, wick))
    }
}

/// One-off form of [`InputSynthesizer`] at the draw's own level.
pub fn stochastic_inputs(
    draw: &NoiseDraw,
    cfg: &SolverConfig,
    times: &[f64],
) -> Result<(FieldTrajectory, Option<FieldTrajectory>)> {
    InputSynthesizer::new(draw.mesh, draw.mesh.n, cfg, times)?.inputs(draw)
}

/// Largest ‖Γ(v₁) − Γ(v₂)‖_∞ / ‖v₁ − v₂‖_∞ over random pairs in the sup-norm
/// ball of the given radius (smooth band-limited trajectories).
pub fn lipschitz_estimate(
    cfg: &SolverConfig,
    psi: &FieldTrajectory,
    psi2: Option<&FieldTrajectory>,
    radius: f64,
    pairs: usize,
    seed: u64,
) -> Result<f64> {
    let source = source_for(cfg, psi2)?;
    let ops = SpectralOps::new(&cfg.grid);
    let steps = cfg.steps_for(cfg.horizon);
    let times: Vec<f64> = (0..=steps).map(|j| j as f64 * cfg.dt).collect();
    let random_v = |s: u64| {
        let mut v = FieldTrajectory::zeros(FieldKind::V, psi.n, &cfg.grid, &times);
        let shape = crate::sobolev_grid::band_limited_with(&ops, s, 2.0);
        let scale = radius / sup_abs(&shape).max(f64::MIN_POSITIVE);
        for j in 0..times.len() {
            let w = (1.0 + j as f64) / times.len() as f64;
            for (x, y) in v.at_mut(j).iter_mut().zip(&shape) {
                *x = scale * w * y;
            }
        }
        v
    };
    let mut best = 0.0f64;
    for k in 0..pairs as u64 {
        let v1 = random_v(seeding::derive(&[seed, k, 1]));
        let v2 = random_v(seeding::derive(&[seed, k, 2]));
        let g1 = gamma_map(&ops, &v1, psi, source, cfg, steps)?;
        let g2 = gamma_map(&ops, &v2, psi, source, cfg, steps)?;
        best = best.max(sup_diff(&g1.values, &g2.values) / sup_diff(&v1.values, &v2.values));
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RichardsonReport {
    pub dts: Vec<f64>,
    /// sup-norm distance between consecutive dt levels at shared times.
    pub differences: Vec<f64>,
    pub order: f64,
}

/// Solves at dt, dt/2, dt/4 over the same horizon and estimates the order
/// from the successive differences. `inputs` builds (ψ, ψ2) on a time grid.
pub fn richardson_order<F>(cfg: &SolverConfig, inputs: F) -> Result<RichardsonReport>
where
    F: Fn(&[f64]) -> Result<(FieldTrajectory, Option<FieldTrajectory>)>,
{
    let mut sols = Vec::new();
    let mut dts = Vec::new();
    for k in 0..3 {
        let mut c = cfg.clone();
        c.dt = cfg.dt / f64::powi(2.0, k);
        c.max_halvings = 0;
        let (psi, psi2) = inputs(&c.times())?;
        let (state, _) = picard_solve(&c, &psi, psi2.as_ref())?;
        dts.push(c.dt);
        sols.push(state.v);
    }
    let m = cfg.grid.len();
    let coarse_steps = cfg.steps_for(cfg.horizon);
    let diff = |a: &FieldTrajectory, b: &FieldTrajectory, stride_a: usize, stride_b: usize| {
        (0..=coarse_steps).fold(0.0f64, |acc, j| {
            let (x, y) = (&a.values[j * stride_a * m..][..m], &b.values[j * stride_b * m..][..m]);
            acc.max(sup_diff(x, y))
        })
    };
    let d1 = diff(&sols[0], &sols[1], 1, 2);
    let d2 = diff(&sols[1], &sols[2], 2, 4);
    Ok(RichardsonReport { dts, differences: vec![d1, d2], order: (d1 / d2).log2() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSolve {
    pub n: u32,
    /// Smallest horizon reached over the samples.
    pub horizon: Option<f64>,
    pub max_iterations: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub regime: Regime,
    pub levels: Vec<u32>,
    pub solves: Vec<LevelSolve>,
    /// Horizon over which the differences are measured.
    pub common_horizon: f64,
    /// sup_t ‖χ(u_{n+1} − u_n)(t)‖ in W^{β,p} (regular) or W^{−α,p} (rough),
    /// averaged over samples; one entry per consecutive pair of levels.
    pub differences: Vec<Estimate>,
    /// Per-pair median over samples of the same norm.
    pub median_differences: Vec<f64>,
}

impl ConvergenceReport {
    /// Decided on the medians: the mean is dominated by draws close to
    /// blowup and need not exist.
    pub fn strictly_decreasing(&self) -> bool {
        self.median_differences.windows(2).all(|w| w[1] < w[0])
    }
}

/// Solves at every level in `levels` with common noise draws and measures
/// consecutive differences of χu_n. `chi` must sit where ρ = 1.
pub fn assemble_and_converge(
    cfg: &SolverConfig,
    h: &HurstVector,
    levels: &[u32],
    resolution: usize,
    chi: &CutoffFn,
    samples: usize,
    seed: u64,
) -> Result<ConvergenceReport> {
    cfg.validate(Some(h))?;
    chi.check_grid(&cfg.grid)?;
    let centre_gap = chi.center.iter().zip(&cfg.rho.center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    if chi.outer_radius + centre_gap > cfg.rho.inner_radius {
        return Err(Error::Config("the support of chi must lie where rho = 1".into()));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) || samples == 0 {
        return Err(Error::Config("levels must be increasing and samples positive".into()));
    }
    let Some(&top) = levels.last() else {
        return Err(Error::Config("no levels".into()));
    };
    let mesh = SpectralMesh::build(h, top, resolution)?;
    let times = cfg.times();
    let synths = levels.iter().map(|&n| InputSynthesizer::new(&mesh, n, cfg, &times)).collect::<Result<Vec<_>>>()?;
    let ops = SpectralOps::new(&cfg.grid);
    let chi_vals = chi.sample(&cfg.grid);
    let s_norm = match cfg.regime {
        Regime::Regular => cfg.beta,
        Regime::Rough => -cfg.alpha,
    };

    type Solved = std::result::Result<(FieldTrajectory, f64, usize), String>;
    let per_sample: Vec<Vec<Solved>> = (0..samples as u64)
        .into_par_iter()
        .map(|k| {
            let fine = NoiseDraw::generate(&mesh, seeding::sample_seed(seed, k));
            synths
                .iter()
                .map(|syn| {
                    let run = || -> Result<(FieldTrajectory, f64, usize)> {
                        let (psi, psi2) = syn.inputs(&fine)?;
                        let (state, t0) = picard_solve(cfg, &psi, psi2.as_ref())?;
                        Ok((u_trajectory(&state, &psi), t0, state.iterations))
                    };
                    run().map_err(|e| e.to_string())
                })
                .collect()
        })
        .collect();

    let solves: Vec<LevelSolve> = levels
        .iter()
        .enumerate()
        .map(|(li, &n)| {
            let mut row = LevelSolve { n, horizon: None, max_iterations: 0, error: None };
            for s in &per_sample {
                match &s[li] {
                    Ok((_, t0, it)) => {
                        row.horizon = Some(row.horizon.map_or(*t0, |h: f64| h.min(*t0)));
                        row.max_iterations = row.max_iterations.max(*it);
                    }
                    Err(e) => {
                        row.error.get_or_insert_with(|| e.clone());
                    }
                }
            }
            row
        })
        .collect();
    let failed = solves.iter().any(|r| r.error.is_some());
    let common_horizon = if failed { 0.0 } else { solves.iter().filter_map(|r| r.horizon).fold(cfg.horizon, f64::min) };
    let mut differences = Vec::new();
    let mut median_differences = Vec::new();
    if !failed && levels.len() > 1 {
        let steps = cfg.steps_for(common_horizon);
        let m = cfg.grid.len();
        let params = SobolevParams::new(s_norm, cfg.p)?;
        for li in 0..levels.len() - 1 {
            let vals = per_sample
                .iter()
                .map(|s| {
                    let (a, b) = (&s[li].as_ref().unwrap().0, &s[li + 1].as_ref().unwrap().0);
                    let mut sup = 0.0f64;
                    for j in 0..=steps {
                        let diff: Vec<f64> = (0..m).map(|i| chi_vals[i] * (b.at(j)[i] - a.at(j)[i])).collect();
                        sup = sup.max(ops.bessel_norm(&diff, params)?);
                    }
                    Ok(sup)
                })
                .collect::<Result<Vec<f64>>>()?;
            differences.push(Estimate::from_samples(&vals));
            median_differences.push(median(&vals));
        }
    }
    Ok(ConvergenceReport {
        regime: cfg.regime,
        levels: levels.to_vec(),
        solves,
        common_horizon,
        differences,
        median_differences,
    })
}

/// Exact mild solution of the linear problem v' = Δv + g, v(0) = 0, with g
/// constant in time: Δ^{-1}(e^{tΔ} − 1)g, and t·g on the zero mode.
pub fn linear_reference(grid: &Grid, g: &[f64], t: f64) -> Vec<f64> {
    SpectralOps::new(grid).apply_multiplier(g, |k2| if k2 == 0.0 { t } else { -(-t * k2).exp_m1() / k2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sobolev_grid::band_limited_field;

    fn grid() -> Grid {
        Grid::new(1, 128, 4.0).unwrap()
    }

    fn base(regime: Regime) -> SolverConfig {
        let g = grid();
        SolverConfig {
            regime,
            alpha: if regime == Regime::Rough { 0.12 } else { 0.0 },
            beta: if regime == Regime::Rough { 0.75 } else { 0.25 },
            p: 2.0,
            horizon: 0.25,
            dt: 0.01,
            tol: 1e-10,
            max_iter: 100,
            max_halvings: 4,
            phi: vec![0.0; g.len()],
            rho: CutoffFn::centered(1, 1.0, 1.8).unwrap(),
            grid: g,
            coupling: 1.0,
        }
    }

    fn zeros(cfg: &SolverConfig, kind: FieldKind) -> FieldTrajectory {
        FieldTrajectory::zeros(kind, 0, &cfg.grid, &cfg.times())
    }

    fn bump(g: &Grid, amp: f64) -> Vec<f64> {
        (0..g.len()).map(|i| amp * (-g.coord(i).powi(2) / 0.1).exp()).collect()
    }

    #[test]
    fn zero_data_gives_zero() {
        let cfg = base(Regime::Regular);
        let z = zeros(&cfg, FieldKind::Psi);
        let (st, t0) = picard_solve(&cfg, &z, None).unwrap();
        assert!(st.v.values.iter().all(|&x| x == 0.0));
        assert_eq!((st.iterations, st.residual, t0), (1, 0.0, 0.25));
        let cfg = base(Regime::Rough);
        let (st, _) = picard_solve(&cfg, &z, Some(&zeros(&cfg, FieldKind::WickSquare))).unwrap();
        assert!(st.v.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn free_evolution_is_heat_flow() {
        let mut cfg = base(Regime::Regular);
        cfg.phi = band_limited_field(&cfg.grid, 3, 1.5);
        let z = zeros(&cfg, FieldKind::Psi);
        let out = gamma_map_regular(&z, &z, &cfg).unwrap();
        let ops = SpectralOps::new(&cfg.grid);
        for (j, &t) in out.times.iter().enumerate() {
            let exact = ops.apply_heat(&cfg.phi, t).unwrap();
            assert!(sup_diff(out.at(j), &exact) < 1e-12);
        }
    }

    #[test]
    fn mild_matches_semigroup_formula() {
        let mut cfg = base(Regime::Rough);
        cfg.coupling = 0.0;
        cfg.dt = 1e-3;
        cfg.horizon = 0.2;
        let g = band_limited_field(&cfg.grid, 9, 1.0);
        let mut src = zeros(&cfg, FieldKind::WickSquare);
        for j in 0..src.times.len() {
            src.at_mut(j).copy_from_slice(&g);
        }
        let z = zeros(&cfg, FieldKind::Psi);
        let out = gamma_map_rough(&z, &z, &src, &cfg).unwrap();
        let last = out.times.len() - 1;
        let exact = linear_reference(&cfg.grid, &g, out.times[last]);
        assert!(sup_diff(out.at(last), &exact) < 1e-6 * (1.0 + sup_abs(&exact)));
    }

    #[test]
    fn regular_converges_with_small_data() {
        let mut cfg = base(Regime::Regular);
        cfg.phi = bump(&cfg.grid, 0.1);
        let mut psi = zeros(&cfg, FieldKind::Psi);
        let shape = band_limited_field(&cfg.grid, 5, 2.0);
        let rho = cfg.rho.sample(&cfg.grid);
        for (j, &t) in cfg.times().iter().enumerate() {
            for i in 0..cfg.grid.len() {
                psi.at_mut(j)[i] = t.sqrt() * rho[i] * shape[i];
            }
        }
        let (st, t0) = picard_solve(&cfg, &psi, None).unwrap();
        assert!(st.residual <= cfg.tol && t0 == 0.25);
        assert!(st.sup_norm.is_finite() && st.weighted_norm.is_none());
        // the accepted iterate is a fixed point up to the tolerance
        let again = gamma_map_regular(&st.v, &psi, &cfg).unwrap();
        assert!(sup_diff(&again.values, &st.v.values) <= cfg.tol * (1.0 + sup_abs(&st.v.values)));
    }

    #[test]
    fn blowup_triggers_halving() {
        let mut cfg = base(Regime::Regular);
        cfg.horizon = 1.0;
        cfg.dt = 1.0 / 64.0;
        cfg.phi = bump(&cfg.grid, 40.0);
        cfg.max_halvings = 8;
        let z = zeros(&cfg, FieldKind::Psi);
        let (st, t0) = picard_solve(&cfg, &z, None).unwrap();
        assert!(t0 < 1.0 && st.residual <= cfg.tol, "T0 = {t0}");
        cfg.max_halvings = 0;
        assert!(matches!(picard_solve(&cfg, &z, None), Err(Error::NoLocalSolution { .. })));
    }

    #[test]
    fn contraction_improves_with_shorter_horizon() {
        let mut cfg = base(Regime::Regular);
        let psi = {
            let mut p = zeros(&cfg, FieldKind::Psi);
            let shape = band_limited_field(&cfg.grid, 8, 2.0);
            for j in 0..p.times.len() {
                p.at_mut(j).copy_from_slice(&shape);
            }
            p
        };
        let l1 = lipschitz_estimate(&cfg, &psi, None, 0.5, 4, 1).unwrap();
        cfg.horizon = 0.125;
        let l2 = lipschitz_estimate(&cfg, &psi, None, 0.5, 4, 1).unwrap();
        let eps = (l1 / l2).log2();
        assert!(eps > 0.0, "{l1} {l2}");
    }

    #[test]
    fn rough_source_bound_scales_with_horizon() {
        // ∫e^{(t−τ)Δ}ψ2 in W^{−α,2} against T^{1−α/2} sup‖ψ2‖_{W^{−2α,2}}
        let cfg0 = base(Regime::Rough);
        let g = band_limited_field(&cfg0.grid, 4, 0.3);
        let ops = SpectralOps::new(&cfg0.grid);
        let mut consts = Vec::new();
        for horizon in [0.05, 0.1, 0.2, 0.4] {
            let mut cfg = cfg0.clone();
            cfg.horizon = horizon;
            cfg.dt = horizon / 20.0;
            let mut src = zeros(&cfg, FieldKind::WickSquare);
            for j in 0..src.times.len() {
                src.at_mut(j).copy_from_slice(&g);
            }
            let z = zeros(&cfg, FieldKind::Psi);
            let out = gamma_map_rough(&z, &z, &src, &cfg).unwrap();
            let lhs = (0..out.times.len())
                .map(|j| ops.bessel_norm(out.at(j), SobolevParams::new(-cfg.alpha, 2.0).unwrap()).unwrap())
                .fold(0.0, f64::max);
            let rhs = horizon.powf(1.0 - cfg.alpha / 2.0)
                * ops.bessel_norm(&g, SobolevParams::new(-2.0 * cfg.alpha, 2.0).unwrap()).unwrap();
            consts.push(lhs / rhs);
        }
        let (lo, hi) = consts.iter().fold((f64::MAX, 0.0f64), |(a, b), &c| (a.min(c), b.max(c)));
        assert!(hi / lo < 2.0, "{consts:?}");
    }

    #[test]
    fn config_windows() {
        let h = HurstVector::new(vec![0.35, 0.2]).unwrap();
        let g = grid();
        let rho = CutoffFn::centered(1, 1.0, 1.8).unwrap();
        let cfg = SolverConfig::new(Regime::Rough, &h, 0.12, g.clone(), rho.clone()).unwrap();
        assert!((cfg.beta - 0.75).abs() < 1e-12);
        assert!(SolverConfig::new(Regime::Rough, &h, 0.05, g.clone(), rho.clone()).is_err());
        assert!(SolverConfig::new(Regime::Regular, &h, 0.0, g.clone(), rho.clone()).is_err());
        let reg = HurstVector::new(vec![0.5, 0.5]).unwrap();
        let cfg = SolverConfig::new(Regime::Regular, &reg, 0.0, g, rho).unwrap();
        assert!((cfg.beta - 0.25).abs() < 1e-12);
        let mut bad = cfg.clone();
        bad.beta = 0.6;
        assert!(bad.validate(Some(&reg)).is_err());
    }

    #[test]
    fn richardson_first_order() {
        let mut cfg = base(Regime::Regular);
        cfg.phi = bump(&cfg.grid, 0.1);
        cfg.dt = 0.02;
        let shape = band_limited_field(&cfg.grid, 5, 2.0);
        let rho = cfg.rho.sample(&cfg.grid);
        let rep = richardson_order(&cfg, |times| {
            let mut p = FieldTrajectory::zeros(FieldKind::Psi, 0, &cfg.grid, times);
            for (j, &t) in times.iter().enumerate() {
                for i in 0..cfg.grid.len() {
                    p.at_mut(j)[i] = (3.0 * t).sin() * rho[i] * shape[i];
                }
            }
            Ok((p, None))
        })
        .unwrap();
        assert!(rep.order > 0.9, "{rep:?}");
    }

    #[test]
    fn single_level_gives_no_differences() {
        let h = HurstVector::new(vec![0.7, 0.6]).unwrap();
        let cfg =
            SolverConfig::new(Regime::Regular, &h, 0.0, grid(), CutoffFn::centered(1, 1.0, 1.8).unwrap()).unwrap();
        let chi = CutoffFn::centered(1, 0.5, 1.0).unwrap();
        let rep = assemble_and_converge(&cfg, &h, &[3], 4, &chi, 1, 7).unwrap();
        assert!(rep.differences.is_empty() && rep.solves[0].error.is_none());
        let wide = CutoffFn::centered(1, 0.5, 1.5).unwrap();
        assert!(assemble_and_converge(&cfg, &h, &[3], 4, &wide, 1, 7).is_err());
    }
}
