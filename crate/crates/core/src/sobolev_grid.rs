//! Bessel-potential norms, the heat semigroup and cutoffs on the periodic
//! grid [−L, L)^d, plus fitted-constant checks of the Sobolev inequalities.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::seeding;

/// Periodic grid with `n` points per axis on [−L, L)^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub d: usize,
    pub n: usize,
    pub half_width: f64,
}

impl Grid {
    pub fn new(d: usize, n: usize, half_width: f64) -> Result<Self> {
        if !(1..=2).contains(&d) {
            return Err(Error::UnsupportedDimension(d));
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::Config(format!("grid size must be a power of two, got {n}")));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::Config(format!("half width must be positive, got {half_width}")));
        }
        Ok(Self { d, n, half_width })
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.d as i32)
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.dx()
    }

    /// Coordinates of flat index `idx` (row-major, last axis fastest).
    pub fn point(&self, idx: usize) -> [f64; 2] {
        match self.d {
            1 => [self.coord(idx), 0.0],
            _ => [self.coord(idx / self.n), self.coord(idx % self.n)],
        }
    }

    /// Wavenumber π·m/L of FFT bin `j`, with m in [−N/2, N/2).
    pub fn wavenumber(&self, j: usize) -> f64 {
        let m = if j < self.n / 2 { j as i64 } else { j as i64 - self.n as i64 };
        PI * m as f64 / self.half_width
    }

    /// |k|² at flat spectral index `idx`.
    pub fn k2(&self, idx: usize) -> f64 {
        match self.d {
            1 => self.wavenumber(idx).powi(2),
            _ => self.wavenumber(idx / self.n).powi(2) + self.wavenumber(idx % self.n).powi(2),
        }
    }

    /// Largest resolved wavenumber.
    pub fn nyquist(&self) -> f64 {
        PI * (self.n / 2) as f64 / self.half_width
    }
}

/// Order `s` and integrability `p` (use `f64::INFINITY` for the max norm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevParams {
    pub s: f64,
    pub p: f64,
}

impl SobolevParams {
    pub fn new(s: f64, p: f64) -> Result<Self> {
        if !(p >= 1.0) || !s.is_finite() {
            return domain(format!("need p >= 1 and finite s, got s={s}, p={p}"));
        }
        Ok(Self { s, p })
    }
}

/// Smooth bump: 1 on the inner ball, 0 outside the outer ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffFn {
    pub center: Vec<f64>,
    pub inner_radius: f64,
    pub outer_radius: f64,
}

fn smooth_step(u: f64) -> f64 {
    // 0 for u <= 0, 1 for u >= 1, C^∞ in between
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / u).exp();
    let b = (-1.0 / (1.0 - u)).exp();
    a / (a + b)
}

impl CutoffFn {
    pub fn new(center: Vec<f64>, inner_radius: f64, outer_radius: f64) -> Result<Self> {
        if !(inner_radius > 0.0 && inner_radius < outer_radius) {
            return domain(format!("cutoff radii must satisfy 0 < inner < outer, got {inner_radius}, {outer_radius}"));
        }
        Ok(Self { center, inner_radius, outer_radius })
    }

    /// Centered cutoff in dimension `d`.
    pub fn centered(d: usize, inner_radius: f64, outer_radius: f64) -> Result<Self> {
        Self::new(vec![0.0; d], inner_radius, outer_radius)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let r = self.center.iter().zip(x).map(|(c, xi)| (xi - c).powi(2)).sum::<f64>().sqrt();
        smooth_step((self.outer_radius - r) / (self.outer_radius - self.inner_radius))
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.center.len() != grid.d {
            return Err(Error::Incompatible(format!(
                "cutoff center has dimension {}, grid has {}",
                self.center.len(),
                grid.d
            )));
        }
        if self.outer_radius > grid.half_width / 2.0 {
            return Err(Error::Config(format!(
                "cutoff outer radius {} exceeds L/2 = {}",
                self.outer_radius,
                grid.half_width / 2.0
            )));
        }
        if self.center.iter().any(|c| c.abs() + self.outer_radius >= grid.half_width) {
            return Err(Error::Config("cutoff support leaves the fundamental domain".into()));
        }
        Ok(())
    }

    /// Profile sampled on the grid.
    pub fn sample(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.len()).map(|i| self.value(&grid.point(i)[..grid.d])).collect()
    }

    /// Flat indices where the profile is nonzero.
    pub fn support(&self, grid: &Grid) -> Vec<usize> {
        (0..grid.len()).filter(|&i| self.value(&grid.point(i)[..grid.d]) > 0.0).collect()
    }
}

/// Pointwise product with a cutoff profile.
pub fn multiply_cutoff(grid: &Grid, field: &[f64], chi: &CutoffFn) -> Vec<f64> {
    field.iter().enumerate().map(|(i, f)| f * chi.value(&grid.point(i)[..grid.d])).collect()
}

/// Trapezoid L^p norm on the periodic grid.
pub fn lp_norm(grid: &Grid, f: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return f.iter().fold(0.0, |m, x| m.max(x.abs()));
    }
    let vol = grid.cell_volume();
    if p == 2.0 {
        return (f.iter().map(|x| x * x).sum::<f64>() * vol).sqrt();
    }
    (f.iter().map(|x| x.abs().powf(p)).sum::<f64>() * vol).powf(1.0 / p)
}

/// FFT plans for one grid; cheap to clone, safe to share.
#[derive(Clone)]
pub struct SpectralOps {
    pub grid: Grid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralOps {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralOps").field("grid", &self.grid).finish()
    }
}

impl SpectralOps {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        Self { grid: grid.clone(), fwd: planner.plan_fft_forward(grid.n), inv: planner.plan_fft_inverse(grid.n) }
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n;
        match self.grid.d {
            1 => plan.process(data),
            _ => {
                plan.process(data);
                let mut col = vec![Complex64::new(0.0, 0.0); n];
                for j in 0..n {
                    for i in 0..n {
                        col[i] = data[i * n + j];
                    }
                    plan.process(&mut col);
                    for i in 0..n {
                        data[i * n + j] = col[i];
                    }
                }
            }
        }
    }

    /// Unnormalised forward DFT of a real field.
    pub fn forward(&self, f: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.transform(&mut data, &self.fwd);
        data
    }

    /// Inverse DFT (normalised), real part.
    pub fn inverse_real(&self, mut coeffs: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut coeffs, &self.inv);
        let scale = 1.0 / self.grid.len() as f64;
        coeffs.into_iter().map(|c| c.re * scale).collect()
    }

    /// Applies the Fourier multiplier m(|k|²).
    pub fn apply_multiplier(&self, f: &[f64], m: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut coeffs = self.forward(f);
        for (idx, c) in coeffs.iter_mut().enumerate() {
            *c *= m(self.grid.k2(idx));
        }
        self.inverse_real(coeffs)
    }

    /// (1 − Δ)^{s/2} f.
    pub fn bessel_potential(&self, f: &[f64], s: f64) -> Vec<f64> {
        if s == 0.0 {
            return f.to_vec();
        }
        self.apply_multiplier(f, |k2| (1.0 + k2).powf(0.5 * s))
    }

    pub fn bessel_norm(&self, f: &[f64], params: SobolevParams) -> Result<f64> {
        if f.len() != self.grid.len() {
            return Err(Error::Incompatible(format!("field has {} values, grid has {}", f.len(), self.grid.len())));
        }
        SobolevParams::new(params.s, params.p)?;
        Ok(lp_norm(&self.grid, &self.bessel_potential(f, params.s), params.p))
    }

    /// Squared W^{s,2} norm from the Plancherel sum.
    pub fn h_norm_sqr(&self, f: &[f64], s: f64) -> f64 {
        let coeffs = self.forward(f);
        let total: f64 =
            coeffs.iter().enumerate().map(|(idx, c)| (1.0 + self.grid.k2(idx)).powf(s) * c.norm_sqr()).sum();
        total * self.grid.cell_volume() / self.grid.len() as f64
    }

    /// e^{tΔ} f.
    pub fn apply_heat(&self, f: &[f64], t: f64) -> Result<Vec<f64>> {
        if !(t >= 0.0) {
            return domain(format!("heat semigroup needs t >= 0, got {t}"));
        }
        Ok(self.apply_multiplier(f, |k2| (-k2 * t).exp()))
    }
}

/// ‖f‖_{W^{s,p}} on `grid` (plans a fresh FFT).
pub fn bessel_norm(grid: &Grid, field: &[f64], params: SobolevParams) -> Result<f64> {
    SpectralOps::new(grid).bessel_norm(field, params)
}

/// e^{tΔ} f on `grid` (plans a fresh FFT).
pub fn apply_heat(grid: &Grid, field: &[f64], t: f64) -> Result<Vec<f64>> {
    SpectralOps::new(grid).apply_heat(field, t)
}

/// Random real field whose modes satisfy |m|_∞ ≤ N/3, with amplitude
/// (1 + |k|²)^{−decay/2}. Each mode draws from its own stream, so a field on
/// N points shares its low modes with the field on N/2 points.
pub fn band_limited_field(grid: &Grid, seed: u64, decay: f64) -> Vec<f64> {
    let ops = SpectralOps::new(grid);
    band_limited_with(&ops, seed, decay)
}

pub fn band_limited_with(ops: &SpectralOps, seed: u64, decay: f64) -> Vec<f64> {
    let grid = &ops.grid;
    let n = grid.n as i64;
    let cut = n / 3;
    let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.len()];
    let idx_of = |m: i64| -> usize { m.rem_euclid(n) as usize };
    let modes: Vec<(i64, i64)> = match grid.d {
        1 => (0..=cut).map(|m| (m, 0)).collect(),
        _ => (-cut..=cut).flat_map(|a| (-cut..=cut).map(move |b| (a, b))).collect(),
    };
    for (a, b) in modes {
        // keep one representative of each ±m pair
        if grid.d == 2 && (a < 0 || (a == 0 && b < 0)) {
            continue;
        }
        let key = seeding::derive(&[seed, (a + 1_000_000) as u64, (b + 1_000_000) as u64]);
        let mut rng = seeding::stream_rng(key, 0);
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        let k2 = (PI / grid.half_width).powi(2) * (a * a + b * b) as f64;
        let amp = (1.0 + k2).powf(-0.5 * decay) * grid.len() as f64;
        let (i, j) = (idx_of(a), idx_of(b));
        let (ci, cj) = (idx_of(-a), idx_of(-b));
        let (pos, neg) = match grid.d {
            1 => (i, ci),
            _ => (i * grid.n + j, ci * grid.n + cj),
        };
        if pos == neg {
            coeffs[pos] = Complex64::new(re * amp, 0.0);
        } else {
            coeffs[pos] = Complex64::new(re, im) * amp;
            coeffs[neg] = Complex64::new(re, -im) * amp;
        }
    }
    ops.inverse_real(coeffs)
}

/// max over samples and times of ‖e^{tΔ}f‖_{W^{s₂,p}} / ((1 + t^{−(s₂−s₁)/2})‖f‖_{W^{s₁,p}}).
pub fn fit_heat_smoothing(
    ops: &SpectralOps,
    fields: &[Vec<f64>],
    s1: f64,
    s2: f64,
    p: f64,
    times: &[f64],
) -> Result<f64> {
    let mut c = 0.0f64;
    for f in fields {
        let base = ops.bessel_norm(f, SobolevParams::new(s1, p)?)?;
        for &t in times {
            let smoothed = ops.apply_heat(f, t)?;
            let lhs = ops.bessel_norm(&smoothed, SobolevParams::new(s2, p)?)?;
            c = c.max(lhs / ((1.0 + t.powf(-(s2 - s1) / 2.0)) * base));
        }
    }
    Ok(c)
}

/// Exponents (r, p₁, p₂, q₁, q₂) of the fractional Leibniz rule.
#[derive(Debug, Clone, Copy)]
pub struct LeibnizExponents {
    pub r: f64,
    pub p1: f64,
    pub p2: f64,
    pub q1: f64,
    pub q2: f64,
}

/// max ratio ‖uv‖_{W^{s,r}} / (‖u‖_{W^{s,p₁}}‖v‖_{L^{p₂}} + ‖u‖_{L^{q₁}}‖v‖_{W^{s,q₂}}).
pub fn fit_kato_ponce(ops: &SpectralOps, pairs: &[(Vec<f64>, Vec<f64>)], s: f64, e: LeibnizExponents) -> Result<f64> {
    let mut c = 0.0f64;
    for (u, v) in pairs {
        let uv: Vec<f64> = u.iter().zip(v).map(|(a, b)| a * b).collect();
        let lhs = ops.bessel_norm(&uv, SobolevParams::new(s, e.r)?)?;
        let rhs = ops.bessel_norm(u, SobolevParams::new(s, e.p1)?)? * lp_norm(&ops.grid, v, e.p2)
            + lp_norm(&ops.grid, u, e.q1) * ops.bessel_norm(v, SobolevParams::new(s, e.q2)?)?;
        c = c.max(lhs / rhs);
    }
    Ok(c)
}

/// max ratio ‖fg‖_{W^{−α,p}} / (‖f‖_{W^{−α,p₁}}‖g‖_{W^{β,p₂}}).
pub fn fit_product(
    ops: &SpectralOps,
    pairs: &[(Vec<f64>, Vec<f64>)],
    alpha: f64,
    beta: f64,
    p: f64,
    p1: f64,
    p2: f64,
) -> Result<f64> {
    let mut c = 0.0f64;
    for (f, g) in pairs {
        let fg: Vec<f64> = f.iter().zip(g).map(|(a, b)| a * b).collect();
        let lhs = ops.bessel_norm(&fg, SobolevParams::new(-alpha, p)?)?;
        let rhs =
            ops.bessel_norm(f, SobolevParams::new(-alpha, p1)?)? * ops.bessel_norm(g, SobolevParams::new(beta, p2)?)?;
        c = c.max(lhs / rhs);
    }
    Ok(c)
}
