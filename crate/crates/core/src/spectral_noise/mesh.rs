//! Graded cell meshes of the half frequency domain {ξ > 0} ∩ D_n.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use serde::{Deserialize, Serialize};

use super::HurstVector;
use crate::error::{Error, Result};

/// Hard cap on cells (mirrors included).
pub const MAX_CELLS: usize = 10_000_000;

/// Grading and width controls for [`SpectralMesh`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshParams {
    /// Cells per dyadic band at and above 1/8 (a quarter of this below).
    pub cells_per_band: usize,
    /// Dyadic bands of ξ below 1; the bottom cell is [0, 2^{−xi_depth}].
    pub xi_depth: u32,
    /// Dyadic bands of |η| below 1.
    pub eta_depth: u32,
    /// d = 2: dyadic angular levels toward each axis.
    pub angular_depth: u32,
    /// Largest ξ cell width below `xi_osc`.
    pub xi_width: f64,
    pub xi_osc: f64,
    /// Largest η cell width (d = 1) or arc length (d = 2).
    pub eta_width: f64,
}

impl MeshParams {
    pub fn new(d: usize, resolution: usize) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::Config("mesh resolution must be at least 1".into()));
        }
        let r = resolution as f64;
        Ok(Self {
            cells_per_band: resolution,
            xi_depth: if d == 1 { 20 } else { 12 },
            eta_depth: if d == 1 { 20 } else { 8 },
            angular_depth: 6,
            xi_width: 4.0 / r,
            xi_osc: 64.0,
            eta_width: 12.0 / r,
        })
    }
}

/// One-dimensional cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub node: f64,
    pub weight: f64,
}

/// η cell; `radial` indexes the shared radius |η|.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaCell {
    pub node: [f64; 2],
    pub weight: f64,
    pub radial: usize,
}

/// Product cell (ξ cell, η cell), possibly mirrored through the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellId {
    pub xi: u32,
    pub eta: u32,
    pub mirrored: bool,
}

impl CellId {
    pub fn mirror(self) -> Self {
        Self { mirrored: !self.mirrored, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub id: CellId,
    /// (ξ, η₁, η₂); η₂ = 0 when d = 1.
    pub node: [f64; 3],
    pub weight: f64,
    pub mirror: CellId,
}

/// Cells of [0, 2^top] graded toward 0, bottom cell first. Returns the
/// cells and, for every exponent e ≤ top, the number of cells below 2^e.
fn dyadic_cells(
    top: i32,
    depth: u32,
    cpb: usize,
    cap: impl Fn(f64) -> Option<f64>,
) -> (Vec<Interval>, Vec<(i32, usize)>) {
    let bottom = -(depth as i32);
    let b = 2f64.powi(bottom);
    let mut cells = vec![Interval { lo: 0.0, hi: b, node: 0.5 * b, weight: b }];
    let mut counts = Vec::new();
    for k in bottom..top {
        let a = 2f64.powi(k);
        let base = if a >= 0.125 { cpb } else { (cpb / 4).max(1) };
        let m = match cap(a) {
            Some(w) => base.max((a / w).ceil() as usize),
            None => base,
        };
        let h = a / m as f64;
        for q in 0..m {
            let lo = a + q as f64 * h;
            let hi = if q + 1 == m { 2.0 * a } else { lo + h };
            cells.push(Interval { lo, hi, node: 0.5 * (lo + hi), weight: hi - lo });
        }
        counts.push((k + 1, cells.len()));
    }
    (cells, counts)
}

/// Angular cells of the first quadrant, graded toward both axes.
fn angular_cells(depth: u32, r_hi: f64, arc: f64) -> Vec<(f64, f64)> {
    let mut breaks = vec![0.0];
    for j in (1..=depth).rev() {
        breaks.push(FRAC_PI_4 * 2f64.powi(-(j as i32)));
    }
    breaks.push(FRAC_PI_4);
    for j in 1..=depth {
        breaks.push(FRAC_PI_2 - FRAC_PI_4 * 2f64.powi(-(j as i32)));
    }
    breaks.push(FRAC_PI_2);
    let mut out = Vec::new();
    for w in breaks.windows(2) {
        let m = ((r_hi * (w[1] - w[0]) / arc).ceil() as usize).max(1);
        let h = (w[1] - w[0]) / m as f64;
        for q in 0..m {
            let lo = w[0] + q as f64 * h;
            let hi = if q + 1 == m { w[1] } else { lo + h };
            out.push((lo, hi));
        }
    }
    out
}

/// Half of D_n = {|ξ| ≤ 4ⁿ} × {|η| ≤ 2ⁿ}, as the product of ξ cells on
/// (0, 4ⁿ] and η cells of the ball. Cells are ordered inner-first, so the
/// mesh at level m < n is a prefix in both factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMesh {
    pub d: usize,
    pub n: u32,
    pub hurst: HurstVector,
    pub params: MeshParams,
    xi: Vec<Interval>,
    eta: Vec<EtaCell>,
    radii: Vec<f64>,
    /// (ξ cells, η cells, radii) at each level 1..=n.
    counts: Vec<(usize, usize, usize)>,
}

impl SpectralMesh {
    /// Mesh at level `n` with the default grading for `resolution`.
    pub fn build(hurst: &HurstVector, n: u32, resolution: usize) -> Result<Self> {
        Self::build_with(hurst, n, MeshParams::new(hurst.d, resolution)?)
    }

    pub fn build_with(hurst: &HurstVector, n: u32, params: MeshParams) -> Result<Self> {
        let d = hurst.d;
        if !(1..=2).contains(&d) {
            return Err(Error::UnsupportedDimension(d));
        }
        let cap = if d == 1 { 12 } else { 8 };
        if n == 0 || n > cap {
            return Err(Error::Config(format!("truncation level must be in 1..={cap} for d = {d}, got {n}")));
        }
        if !(params.xi_width > 0.0 && params.eta_width > 0.0 && params.cells_per_band > 0) {
            return Err(Error::Config("mesh widths and cells per band must be positive".into()));
        }
        let cpb = params.cells_per_band;
        let (xi, xi_counts) =
            dyadic_cells(2 * n as i32, params.xi_depth, cpb, |a| (a < params.xi_osc).then_some(params.xi_width));
        let (radial, radial_counts) = dyadic_cells(n as i32, params.eta_depth, cpb, |_| Some(params.eta_width));

        // cheap size check before laying out η cells
        let per_radial = |r: &Interval| -> usize {
            match d {
                1 => 2,
                _ => 4 * angular_cells(params.angular_depth, r.hi, params.eta_width).len(),
            }
        };
        let n_eta: usize = radial.iter().map(per_radial).sum();
        let total = 2usize.saturating_mul(xi.len()).saturating_mul(n_eta);
        if total > MAX_CELLS {
            return Err(Error::Budget(format!("mesh would have {total} cells (limit {MAX_CELLS})")));
        }

        let mut eta = Vec::with_capacity(n_eta);
        let mut radii = Vec::with_capacity(radial.len());
        let mut eta_after = Vec::with_capacity(radial.len());
        for (k, r) in radial.iter().enumerate() {
            match d {
                1 => {
                    radii.push(r.node);
                    eta.push(EtaCell { node: [r.node, 0.0], weight: r.weight, radial: k });
                    eta.push(EtaCell { node: [-r.node, 0.0], weight: r.weight, radial: k });
                }
                _ => {
                    let (lo, hi) = (r.lo, r.hi);
                    let rc = 2.0 / 3.0 * (hi.powi(3) - lo.powi(3)) / (hi * hi - lo * lo);
                    radii.push(rc);
                    let ring = 0.5 * (hi * hi - lo * lo);
                    let ang = angular_cells(params.angular_depth, hi, params.eta_width);
                    for q in 0..4 {
                        for &(a, b) in &ang {
                            let th = 0.5 * (a + b) + q as f64 * FRAC_PI_2;
                            eta.push(EtaCell {
                                node: [rc * th.cos(), rc * th.sin()],
                                weight: ring * (b - a),
                                radial: k,
                            });
                        }
                    }
                }
            }
            eta_after.push(eta.len());
        }
        let lookup = |counts: &[(i32, usize)], e: i32| -> usize {
            counts.iter().find(|(x, _)| *x == e).map(|c| c.1).expect("exponent in range")
        };
        let counts = (1..=n as i32)
            .map(|m| {
                let nr = lookup(&radial_counts, m);
                (lookup(&xi_counts, 2 * m), eta_after[nr - 1], nr)
            })
            .collect();
        Ok(Self { d, n, hurst: hurst.clone(), params, xi, eta, radii, counts })
    }

    /// The same mesh truncated to level `m ≤ n`.
    pub fn truncate(&self, m: u32) -> Result<Self> {
        let (nx, ne, nr) = self.counts(m)?;
        Ok(Self {
            d: self.d,
            n: m,
            hurst: self.hurst.clone(),
            params: self.params,
            xi: self.xi[..nx].to_vec(),
            eta: self.eta[..ne].to_vec(),
            radii: self.radii[..nr].to_vec(),
            counts: self.counts[..m as usize].to_vec(),
        })
    }

    /// (ξ cells, η cells, radii) of level `m`.
    pub fn counts(&self, m: u32) -> Result<(usize, usize, usize)> {
        if m == 0 || m > self.n {
            return Err(Error::Incompatible(format!("level {m} outside 1..={}", self.n)));
        }
        Ok(self.counts[m as usize - 1])
    }

    pub fn xi_cells(&self) -> &[Interval] {
        &self.xi
    }

    pub fn eta_cells(&self) -> &[EtaCell] {
        &self.eta
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// Half-domain cells.
    pub fn num_half_cells(&self) -> usize {
        self.xi.len() * self.eta.len()
    }

    /// Cells including mirrors.
    pub fn num_cells(&self) -> usize {
        2 * self.num_half_cells()
    }

    pub fn cell(&self, id: CellId) -> Cell {
        let x = &self.xi[id.xi as usize];
        let e = &self.eta[id.eta as usize];
        let s = if id.mirrored { -1.0 } else { 1.0 };
        Cell { id, node: [s * x.node, s * e.node[0], s * e.node[1]], weight: x.weight * e.weight, mirror: id.mirror() }
    }

    /// Every cell, mirrors included.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.eta.len()).flat_map(move |j| {
            (0..self.xi.len()).flat_map(move |i| {
                let id = CellId { xi: i as u32, eta: j as u32, mirrored: false };
                [self.cell(id), self.cell(id.mirror())]
            })
        })
    }

    /// Σ weight over cells and mirrors.
    pub fn total_weight(&self) -> f64 {
        let wx: f64 = self.xi.iter().map(|c| c.weight).sum();
        let we: f64 = self.eta.iter().map(|c| c.weight).sum();
        2.0 * wx * we
    }

    /// Lebesgue measure of D_n.
    pub fn domain_measure(&self) -> f64 {
        let xi = 2.0 * 4f64.powi(self.n as i32);
        let r = 2f64.powi(self.n as i32);
        match self.d {
            1 => xi * 2.0 * r,
            _ => xi * std::f64::consts::PI * r * r,
        }
    }

    /// Same grading rule and Hurst vector.
    pub fn check_compatible(&self, other: &SpectralMesh) -> Result<()> {
        if self.d != other.d || self.params != other.params || self.hurst != other.hurst {
            return Err(Error::Incompatible("meshes differ in grading rule or Hurst vector".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(v: &[f64]) -> HurstVector {
        HurstVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn box_measure_d1() {
        let m = SpectralMesh::build(&h(&[0.7, 0.6]), 1, 8).unwrap();
        assert!((m.total_weight() - 32.0).abs() < 32.0 * 1e-9);
        let m = SpectralMesh::build(&h(&[0.3, 0.4]), 6, 4).unwrap();
        assert!((m.total_weight() / m.domain_measure() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn disc_measure_and_domain_d2() {
        let m = SpectralMesh::build(&h(&[0.45, 0.4, 0.4]), 3, 8).unwrap();
        assert!((m.total_weight() / m.domain_measure() - 1.0).abs() < 1e-9);
        for c in m.cells() {
            assert!(c.node[0].abs() <= 64.0);
            assert!(c.node[1].hypot(c.node[2]) <= 8.0);
            assert!(c.node.iter().all(|&v| v != 0.0));
            assert!(c.weight > 0.0);
        }
    }

    #[test]
    fn mirror_is_an_involution() {
        let m = SpectralMesh::build(&h(&[0.45, 0.4, 0.4]), 2, 4).unwrap();
        for c in m.cells() {
            let back = m.cell(c.mirror);
            assert_eq!(back.mirror, c.id);
            assert_eq!(m.cell(back.mirror).node, c.node);
            assert_eq!(back.node, [-c.node[0], -c.node[1], -c.node[2]]);
        }
    }

    #[test]
    fn levels_are_prefixes() {
        for hv in [h(&[0.7, 0.6]), h(&[0.45, 0.4, 0.4])] {
            let big = SpectralMesh::build(&hv, 5, 8).unwrap();
            for m in 1..5 {
                let small = SpectralMesh::build(&hv, m, 8).unwrap();
                assert_eq!(big.truncate(m).unwrap(), small);
            }
        }
    }

    #[test]
    fn grading_reaches_the_hyperplanes() {
        let m = SpectralMesh::build(&h(&[0.7, 0.6]), 2, 8).unwrap();
        let min_xi = m.xi_cells().iter().map(|c| c.node).fold(f64::MAX, f64::min);
        let min_eta = m.eta_cells().iter().map(|c| c.node[0].abs()).fold(f64::MAX, f64::min);
        assert!(min_xi < 1e-6 && min_eta < 1e-6);
        let m2 = SpectralMesh::build(&h(&[0.45, 0.4, 0.4]), 2, 8).unwrap();
        let min_axis = m2
            .eta_cells()
            .iter()
            .map(|c| c.node[0].abs().min(c.node[1].abs()) / c.node[0].hypot(c.node[1]))
            .fold(f64::MAX, f64::min);
        assert!(min_axis < 0.01);
    }

    #[test]
    fn budget_and_level_errors() {
        let hv = h(&[0.45, 0.4, 0.4]);
        assert!(matches!(SpectralMesh::build(&hv, 8, 64), Err(Error::Budget(_))));
        assert!(SpectralMesh::build(&hv, 0, 8).is_err());
        assert!(SpectralMesh::build(&hv, 13, 8).is_err());
        let m = SpectralMesh::build(&hv, 2, 4).unwrap();
        assert!(m.counts(3).is_err());
    }
}
