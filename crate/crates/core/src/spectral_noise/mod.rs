//! Spectral sampling of the truncated fractional noise and synthesis of
//! B_n, Ψ_n and the Wick square, with exact cell-sum moments.

mod mesh;
mod moments;
mod synth;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::sobolev_grid::Grid;

pub use crate::stats::Estimate;

pub use mesh::{Cell, CellId, EtaCell, Interval, MeshParams, SpectralMesh, MAX_CELLS};
pub use moments::{
    cauchy_decay, covariance_check, covariance_oracle, increment_norm_exact, lag_quadratic_form, sigma_disc,
    sigma_disc_level, variance_spectrum, wick_moments_check, wick_norm_exact, wick_square, CauchyDecay, Probe,
    ProbeResult, SpectrumLine, WickProbe,
};
pub use synth::{
    psi_from_evaluator, synthesize_b, synthesize_psi, synthesize_psi_on, BEvaluator, NoiseDraw, PointSet, PsiEvaluator,
};

/// Hurst indices (H₀, H₁, …, H_d).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct HurstVector {
    pub d: usize,
    pub h: Vec<f64>,
}

impl TryFrom<Vec<f64>> for HurstVector {
    type Error = Error;
    fn try_from(h: Vec<f64>) -> Result<Self> {
        Self::new(h)
    }
}

impl From<HurstVector> for Vec<f64> {
    fn from(h: HurstVector) -> Self {
        h.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegimeTag {
    Regular,
    RoughWick,
    Rough2D,
    Explosive,
}

impl HurstVector {
    pub fn new(h: Vec<f64>) -> Result<Self> {
        if h.len() < 2 {
            return domain(format!("need H₀ and at least one spatial index, got {} values", h.len()));
        }
        if let Some(bad) = h.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
            return domain(format!("Hurst component out of (0,1): {bad}"));
        }
        Ok(Self { d: h.len() - 1, h })
    }

    pub fn h0(&self) -> f64 {
        self.h[0]
    }

    pub fn spatial(&self) -> &[f64] {
        &self.h[1..]
    }

    /// 2H₀ + ΣH_i.
    pub fn weighted_sum(&self) -> f64 {
        2.0 * self.h[0] + self.spatial().iter().sum::<f64>()
    }

    pub fn alpha_h(&self) -> f64 {
        self.weighted_sum() - self.d as f64
    }

    pub fn kappa(&self) -> f64 {
        self.d as f64 - self.weighted_sum()
    }

    pub fn is_regular(&self) -> bool {
        self.alpha_h() > 0.0
    }

    pub fn is_rough_wick(&self) -> bool {
        let a = self.alpha_h();
        a > -0.25 && a <= 0.0
    }

    pub fn is_rough_2d(&self) -> bool {
        let s = self.weighted_sum();
        self.d == 2 && self.h[1] < 0.75 && self.h[2] < 0.75 && s > 1.5 && s <= 1.75
    }

    pub fn is_explosive(&self) -> bool {
        self.weighted_sum() <= 0.75 * self.d as f64
    }

    pub fn tags(&self) -> Vec<RegimeTag> {
        let mut out = Vec::new();
        if self.is_regular() {
            out.push(RegimeTag::Regular);
        }
        if self.is_rough_wick() {
            out.push(RegimeTag::RoughWick);
        }
        if self.is_rough_2d() {
            out.push(RegimeTag::Rough2D);
        }
        if self.is_explosive() {
            out.push(RegimeTag::Explosive);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    #[serde(rename = "B_n")]
    B,
    #[serde(rename = "Psi_n")]
    Psi,
    #[serde(rename = "WickSquare_n")]
    WickSquare,
    #[serde(rename = "v")]
    V,
    #[serde(rename = "u")]
    U,
}

/// Real field sampled on a spatial grid at a list of times.
///
/// When `support` is set only those grid points were evaluated; the rest
/// hold 0 and must be killed by a cutoff before use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldTrajectory {
    pub kind: FieldKind,
    pub n: u32,
    pub seed: Option<u64>,
    pub grid: Grid,
    pub times: Vec<f64>,
    /// Row-major (time, space).
    pub values: Vec<f64>,
    pub support: Option<Vec<usize>>,
    /// Largest relative imaginary part discarded during synthesis.
    pub imag_residue: f64,
}

impl FieldTrajectory {
    pub fn zeros(kind: FieldKind, n: u32, grid: &Grid, times: &[f64]) -> Self {
        Self {
            kind,
            n,
            seed: None,
            grid: grid.clone(),
            times: times.to_vec(),
            values: vec![0.0; times.len() * grid.len()],
            support: None,
            imag_residue: 0.0,
        }
    }

    pub fn at(&self, ti: usize) -> &[f64] {
        let m = self.grid.len();
        &self.values[ti * m..(ti + 1) * m]
    }

    pub fn at_mut(&mut self, ti: usize) -> &mut [f64] {
        let m = self.grid.len();
        &mut self.values[ti * m..(ti + 1) * m]
    }

    /// One NDJSON record per time slice.
    pub fn write_ndjson<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        #[derive(Serialize)]
        struct Record<'a> {
            kind: FieldKind,
            n: u32,
            seed: Option<u64>,
            t: f64,
            grid_meta: &'a Grid,
            values: &'a [f64],
        }
        for (ti, &t) in self.times.iter().enumerate() {
            let rec =
                Record { kind: self.kind, n: self.n, seed: self.seed, t, grid_meta: &self.grid, values: self.at(ti) };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub(crate) fn check_times(times: &[f64]) -> Result<()> {
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0 && **t <= 1.0)) {
        return domain(format!("synthesis times must lie in [0,1], got {t}"));
    }
    Ok(())
}
