//! Noise draws and pointwise synthesis of B_n and Ψ_n.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{check_times, FieldKind, FieldTrajectory, SpectralMesh};
use crate::error::{Error, Result};
use crate::heatkernel::gamma_r2;
use crate::seeding;
use crate::sobolev_grid::Grid;

/// Residue above which a synthesized field is rejected.
const REAL_TOL: f64 = 1e-10;

/// One complex standard Gaussian per half-domain cell.
///
/// η cell `j` draws from its own stream of `seed`, walking ξ cells
/// inner-first, so a draw on a coarser level of the same mesh family
/// reuses exactly the same numbers.
#[derive(Debug, Clone)]
pub struct NoiseDraw<'m> {
    pub mesh: &'m SpectralMesh,
    pub seed: u64,
    z: Vec<Complex64>,
}

impl<'m> NoiseDraw<'m> {
    pub fn generate(mesh: &'m SpectralMesh, seed: u64) -> Self {
        let nxi = mesh.xi_cells().len();
        let neta = mesh.eta_cells().len();
        let mut z = Vec::with_capacity(nxi * neta);
        for j in 0..neta {
            let mut rng = seeding::stream_rng(seed, j as u64);
            for _ in 0..nxi {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                z.push(Complex64::new(re, im) * FRAC_1_SQRT_2);
            }
        }
        Self { mesh, seed, z }
    }

    /// The draw of a coarser mesh of the same family, read off `fine`.
    pub fn generate_prefix(mesh: &'m SpectralMesh, fine: &NoiseDraw) -> Result<Self> {
        fine.mesh.check_compatible(mesh)?;
        if mesh.n > fine.mesh.n {
            return Err(Error::Incompatible(format!("level {} is finer than the draw ({})", mesh.n, fine.mesh.n)));
        }
        let nxi = mesh.xi_cells().len();
        let stride = fine.mesh.xi_cells().len();
        let z =
            (0..mesh.eta_cells().len()).flat_map(|j| fine.z[j * stride..j * stride + nxi].iter().copied()).collect();
        Ok(Self { mesh, seed: fine.seed, z })
    }

    pub fn z(&self, xi: usize, eta: usize) -> Complex64 {
        self.z[eta * self.mesh.xi_cells().len() + xi]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.z
    }
}

/// Evaluation points with deduplicated coordinates per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    xs: Vec<f64>,
    ys: Vec<f64>,
    idx: Vec<(usize, usize)>,
}

impl PointSet {
    pub fn from_points(pts: &[[f64; 2]]) -> Self {
        let mut xmap = BTreeMap::new();
        let mut ymap = BTreeMap::new();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        let idx = pts
            .iter()
            .map(|p| {
                let ix = *xmap.entry(p[0].to_bits()).or_insert_with(|| {
                    xs.push(p[0]);
                    xs.len() - 1
                });
                let iy = *ymap.entry(p[1].to_bits()).or_insert_with(|| {
                    ys.push(p[1]);
                    ys.len() - 1
                });
                (ix, iy)
            })
            .collect();
        Self { xs, ys, idx }
    }

    pub fn from_grid(grid: &Grid, indices: &[usize]) -> Self {
        let pts: Vec<[f64; 2]> = indices.iter().map(|&i| grid.point(i)).collect();
        Self::from_points(&pts)
    }

    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }

    pub(crate) fn parts(&self) -> (&[f64], &[f64], &[(usize, usize)]) {
        (&self.xs, &self.ys, &self.idx)
    }
}

/// e^{iη_j x} per distinct coordinate, laid out (coordinate, η).
fn phase_tables(mesh: &SpectralMesh, neta: usize, pts: &PointSet) -> (Vec<Complex64>, Vec<Complex64>) {
    let eta = &mesh.eta_cells()[..neta];
    let table = |coords: &[f64], axis: usize| -> Vec<Complex64> {
        coords.iter().flat_map(|&x| eta.iter().map(move |e| Complex64::from_polar(1.0, e.node[axis] * x))).collect()
    };
    let e2 = if mesh.d == 2 { table(&pts.ys, 1) } else { Vec::new() };
    (table(&pts.xs, 0), e2)
}

fn check_draw(mesh: &SpectralMesh, level: u32, draw: &NoiseDraw) -> Result<()> {
    draw.mesh.check_compatible(mesh)?;
    if draw.mesh.n < level {
        return Err(Error::Incompatible(format!("draw has level {}, evaluator needs {level}", draw.mesh.n)));
    }
    Ok(())
}

/// Σ_j (c⁺_j e^{iη_j·x} + c⁻_j e^{−iη_j·x}) at every point; returns the real
/// parts and the largest relative imaginary part.
fn sum_modes(
    d: usize,
    cp: &[Complex64],
    cm: &[Complex64],
    pts: &PointSet,
    e1: &[Complex64],
    e2: &[Complex64],
    out: &mut [f64],
) -> f64 {
    let neta = cp.len();
    let scale: f64 = cp.iter().chain(cm).map(|c| c.norm()).sum();
    let mut residue = 0.0f64;
    for (p, &(ix, iy)) in pts.idx.iter().enumerate() {
        let row1 = &e1[ix * neta..(ix + 1) * neta];
        let mut acc = Complex64::new(0.0, 0.0);
        if d == 1 {
            for j in 0..neta {
                let ph = row1[j];
                acc += cp[j] * ph + cm[j] * ph.conj();
            }
        } else {
            let row2 = &e2[iy * neta..(iy + 1) * neta];
            for j in 0..neta {
                let ph = row1[j] * row2[j];
                acc += cp[j] * ph + cm[j] * ph.conj();
            }
        }
        out[p] = acc.re;
        if scale > 0.0 {
            residue = residue.max(acc.im.abs() / scale);
        }
    }
    residue
}

/// Ψ_n at fixed times and points for any draw of the mesh family.
///
/// Ψ(t,x) = Σ_cells f_{t,x}(ξ,η)√w z + f_{t,x}(−ξ,−η)√w z̄ with
/// f = i^{d+1}·sgn(ξ)|ξ|^{1/2−H₀}·Π sgn(η_k)|η_k|^{1/2−H_k}·e^{i⟨η,x⟩}γ_t(ξ,|η|);
/// the mirror term is evaluated from the formula, not by conjugation.
#[derive(Debug, Clone)]
pub struct PsiEvaluator<'m> {
    mesh: &'m SpectralMesh,
    pub level: u32,
    pub times: Vec<f64>,
    nxi: usize,
    neta: usize,
    nrad: usize,
    /// per time: [plus | minus], each (radius, ξ)
    tables: Vec<Vec<Complex64>>,
    amp_eta: Vec<f64>,
    points: PointSet,
    e1: Vec<Complex64>,
    e2: Vec<Complex64>,
}

fn xi_amplitudes(mesh: &SpectralMesh, nxi: usize, power: f64) -> Vec<f64> {
    mesh.xi_cells()[..nxi].iter().map(|c| c.node.powf(power) * c.weight.sqrt()).collect()
}

fn eta_amplitude(mesh: &SpectralMesh, j: usize, shift: f64) -> f64 {
    let e = &mesh.eta_cells()[j];
    let mut a = e.weight.sqrt();
    for (k, &hk) in mesh.hurst.spatial().iter().enumerate() {
        let v = e.node[k];
        a *= v.signum() * v.abs().powf(shift - hk);
    }
    a
}

impl<'m> PsiEvaluator<'m> {
    pub fn new(mesh: &'m SpectralMesh, level: u32, times: &[f64], points: PointSet) -> Result<Self> {
        check_times(times)?;
        let (nxi, neta, nrad) = mesh.counts(level)?;
        let a = xi_amplitudes(mesh, nxi, 0.5 - mesh.hurst.h0());
        let xi = mesh.xi_cells();
        let radii = mesh.radii();
        let tables = times
            .iter()
            .map(|&t| {
                let mut tab = Vec::with_capacity(2 * nrad * nxi);
                for &r in &radii[..nrad] {
                    let r2 = r * r;
                    tab.extend((0..nxi).map(|i| a[i] * gamma_r2(t, xi[i].node, r2)));
                }
                for &r in &radii[..nrad] {
                    let r2 = r * r;
                    tab.extend((0..nxi).map(|i| -a[i] * gamma_r2(t, -xi[i].node, r2)));
                }
                tab
            })
            .collect();
        let amp_eta = (0..neta).map(|j| eta_amplitude(mesh, j, 0.5)).collect();
        let (e1, e2) = phase_tables(mesh, neta, &points);
        Ok(Self { mesh, level, times: times.to_vec(), nxi, neta, nrad, tables, amp_eta, points, e1, e2 })
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    /// Values laid out (time, point) and the largest relative imaginary residue.
    pub fn eval(&self, draw: &NoiseDraw) -> Result<(Vec<f64>, f64)> {
        check_draw(self.mesh, self.level, draw)?;
        let d = self.mesh.d;
        // i^{d+1} and the (−1)^d of the mirrored η factor
        let pre = Complex64::i().powu(d as u32 + 1);
        let msign = if d.is_multiple_of(2) { 1.0 } else { -1.0 };
        let stride = draw.mesh.xi_cells().len();
        let z = draw.values();
        let eta = self.mesh.eta_cells();
        let np = self.points.len();
        let mut out = vec![0.0; self.times.len() * np];
        let mut residue = 0.0f64;
        let mut cp = vec![Complex64::new(0.0, 0.0); self.neta];
        let mut cm = vec![Complex64::new(0.0, 0.0); self.neta];
        for (ti, tab) in self.tables.iter().enumerate() {
            let (plus, minus) = tab.split_at(self.nrad * self.nxi);
            for j in 0..self.neta {
                let rho = eta[j].radial;
                let row_p = &plus[rho * self.nxi..(rho + 1) * self.nxi];
                let row_m = &minus[rho * self.nxi..(rho + 1) * self.nxi];
                let zr = &z[j * stride..j * stride + self.nxi];
                let mut sp = Complex64::new(0.0, 0.0);
                let mut sm = Complex64::new(0.0, 0.0);
                for i in 0..self.nxi {
                    sp += row_p[i] * zr[i];
                    sm += row_m[i] * zr[i].conj();
                }
                cp[j] = pre * self.amp_eta[j] * sp;
                cm[j] = pre * (msign * self.amp_eta[j]) * sm;
            }
            let r = sum_modes(d, &cp, &cm, &self.points, &self.e1, &self.e2, &mut out[ti * np..(ti + 1) * np]);
            residue = residue.max(r);
        }
        Ok((out, residue))
    }
}

/// B_n at fixed times and points:
/// c_H Σ (e^{itξ}−1)|ξ|^{−H₀−1/2} Π(e^{ix_kη_k}−1)|η_k|^{−H_k−1/2} √w z + mirror.
#[derive(Debug, Clone)]
pub struct BEvaluator<'m> {
    mesh: &'m SpectralMesh,
    pub level: u32,
    pub times: Vec<f64>,
    nxi: usize,
    neta: usize,
    tables: Vec<Vec<Complex64>>,
    amp_eta: Vec<f64>,
    points: PointSet,
    e1: Vec<Complex64>,
    e2: Vec<Complex64>,
}

impl<'m> BEvaluator<'m> {
    pub fn new(mesh: &'m SpectralMesh, level: u32, times: &[f64], points: PointSet) -> Result<Self> {
        check_times(times)?;
        let (nxi, neta, _) = mesh.counts(level)?;
        let a = xi_amplitudes(mesh, nxi, -0.5 - mesh.hurst.h0());
        let xi = mesh.xi_cells();
        let tables = times
            .iter()
            .map(|&t| {
                let mut tab: Vec<Complex64> =
                    (0..nxi).map(|i| a[i] * (Complex64::new(0.0, t * xi[i].node).exp() - 1.0)).collect();
                tab.extend((0..nxi).map(|i| a[i] * (Complex64::new(0.0, -t * xi[i].node).exp() - 1.0)));
                tab
            })
            .collect();
        // |η_k|^{−H_k−1/2}√w without sign
        let amp_eta = (0..neta)
            .map(|j| {
                let e = &mesh.eta_cells()[j];
                mesh.hurst
                    .spatial()
                    .iter()
                    .enumerate()
                    .fold(e.weight.sqrt(), |acc, (k, &hk)| acc * e.node[k].abs().powf(-0.5 - hk))
            })
            .collect();
        let (e1, e2) = phase_tables(mesh, neta, &points);
        Ok(Self { mesh, level, times: times.to_vec(), nxi, neta, tables, amp_eta, points, e1, e2 })
    }

    pub fn eval(&self, draw: &NoiseDraw) -> Result<(Vec<f64>, f64)> {
        check_draw(self.mesh, self.level, draw)?;
        let d = self.mesh.d;
        let stride = draw.mesh.xi_cells().len();
        let z = draw.values();
        let np = self.points.len();
        let mut out = vec![0.0; self.times.len() * np];
        let mut residue = 0.0f64;
        let one = Complex64::new(1.0, 0.0);
        for (ti, tab) in self.tables.iter().enumerate() {
            let (plus, minus) = tab.split_at(self.nxi);
            let mut sp = vec![Complex64::new(0.0, 0.0); self.neta];
            let mut sm = vec![Complex64::new(0.0, 0.0); self.neta];
            for j in 0..self.neta {
                let zr = &z[j * stride..j * stride + self.nxi];
                for i in 0..self.nxi {
                    sp[j] += plus[i] * zr[i];
                    sm[j] += minus[i] * zr[i].conj();
                }
            }
            let scale: f64 =
                sp.iter().chain(&sm).zip(self.amp_eta.iter().chain(&self.amp_eta)).map(|(s, a)| s.norm() * a).sum();
            for (p, &(ix, iy)) in self.points.idx.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..self.neta {
                    let p1 = self.e1[ix * self.neta + j];
                    let (f, fm) = if d == 1 {
                        (p1 - one, p1.conj() - one)
                    } else {
                        let p2 = self.e2[iy * self.neta + j];
                        ((p1 - one) * (p2 - one), (p1.conj() - one) * (p2.conj() - one))
                    };
                    acc += self.amp_eta[j] * (f * sp[j] + fm * sm[j]);
                }
                out[ti * np + p] = acc.re;
                if scale > 0.0 {
                    residue = residue.max(acc.im.abs() / scale);
                }
            }
        }
        Ok((out, residue))
    }
}

fn trajectory(
    kind: FieldKind,
    draw: &NoiseDraw,
    grid: &Grid,
    times: &[f64],
    indices: &[usize],
    values: Vec<f64>,
    residue: f64,
) -> Result<FieldTrajectory> {
    if residue > REAL_TOL {
        return Err(Error::NotReal(residue));
    }
    let mut tr = FieldTrajectory::zeros(kind, draw.mesh.n, grid, times);
    tr.seed = Some(draw.seed);
    tr.imag_residue = residue;
    let np = indices.len();
    for ti in 0..times.len() {
        let row = tr.at_mut(ti);
        for (p, &g) in indices.iter().enumerate() {
            row[g] = values[ti * np + p];
        }
    }
    if np != grid.len() {
        tr.support = Some(indices.to_vec());
    }
    Ok(tr)
}

fn check_grid_dim(mesh: &SpectralMesh, grid: &Grid) -> Result<()> {
    if mesh.d != grid.d {
        return Err(Error::Incompatible(format!("mesh dimension {} vs grid dimension {}", mesh.d, grid.d)));
    }
    Ok(())
}

/// B_n on every grid point.
pub fn synthesize_b(draw: &NoiseDraw, grid: &Grid, times: &[f64]) -> Result<FieldTrajectory> {
    check_grid_dim(draw.mesh, grid)?;
    let all: Vec<usize> = (0..grid.len()).collect();
    let ev = BEvaluator::new(draw.mesh, draw.mesh.n, times, PointSet::from_grid(grid, &all))?;
    let (v, res) = ev.eval(draw)?;
    trajectory(FieldKind::B, draw, grid, times, &all, v, res)
}

/// Ψ_n on every grid point.
pub fn synthesize_psi(draw: &NoiseDraw, grid: &Grid, times: &[f64]) -> Result<FieldTrajectory> {
    let all: Vec<usize> = (0..grid.len()).collect();
    synthesize_psi_on(draw, grid, times, &all)
}

/// Ψ_n on the listed grid points only.
pub fn synthesize_psi_on(draw: &NoiseDraw, grid: &Grid, times: &[f64], indices: &[usize]) -> Result<FieldTrajectory> {
    check_grid_dim(draw.mesh, grid)?;
    let ev = PsiEvaluator::new(draw.mesh, draw.mesh.n, times, PointSet::from_grid(grid, indices))?;
    let (v, res) = ev.eval(draw)?;
    trajectory(FieldKind::Psi, draw, grid, times, indices, v, res)
}

/// Ψ at `ev.level` from a draw at that level or finer, placed on the grid
/// points `indices` the evaluator was built for.
pub fn psi_from_evaluator(
    ev: &PsiEvaluator,
    draw: &NoiseDraw,
    grid: &Grid,
    indices: &[usize],
) -> Result<FieldTrajectory> {
    if ev.points().len() != indices.len() {
        return Err(Error::Incompatible(format!(
            "{} indices for {} evaluation points",
            indices.len(),
            ev.points().len()
        )));
    }
    let (v, res) = ev.eval(draw)?;
    let mut tr = trajectory(FieldKind::Psi, draw, grid, &ev.times, indices, v, res)?;
    tr.n = ev.level;
    Ok(tr)
}
