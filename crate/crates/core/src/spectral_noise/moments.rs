//! Exact second moments of the synthesized fields, and the Gaussian
//! quadratic forms behind the Cauchy and Wick diagnostics.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::synth::{NoiseDraw, PointSet, PsiEvaluator};
use super::{check_times, Estimate, FieldKind, FieldTrajectory, SpectralMesh};
use crate::error::{Error, Result};
use crate::heatkernel::gamma_r2;
use crate::seeding;
use crate::sobolev_grid::{CutoffFn, Grid, SpectralOps};
use crate::stats::linear_fit;

/// η node with the variance V_η its ξ-column contributes (mirrors included).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumLine {
    pub eta: [f64; 2],
    pub weight: f64,
}

fn xi_weights(mesh: &SpectralMesh, nxi: usize) -> Vec<f64> {
    let p = 1.0 - 2.0 * mesh.hurst.h0();
    mesh.xi_cells()[..nxi].iter().map(|c| c.node.powf(p) * c.weight).collect()
}

fn eta_weight(mesh: &SpectralMesh, j: usize) -> f64 {
    let e = &mesh.eta_cells()[j];
    mesh.hurst.spatial().iter().enumerate().fold(e.weight, |acc, (k, &hk)| acc * e.node[k].abs().powf(1.0 - 2.0 * hk))
}

/// Per η node, Σ |f|²w over the cells of level `level` that are not in
/// level `exclude` (cells and mirrors), at time t.
pub fn variance_spectrum(mesh: &SpectralMesh, t: f64, level: u32, exclude: Option<u32>) -> Result<Vec<SpectrumLine>> {
    check_times(&[t])?;
    let (nxi, neta, nrad) = mesh.counts(level)?;
    let (ex_xi, ex_eta) = match exclude {
        Some(m) if m >= level => return Err(Error::Incompatible(format!("excluded level {m} not below {level}"))),
        Some(m) => {
            let c = mesh.counts(m)?;
            (c.0, c.1)
        }
        None => (0, 0),
    };
    let a = xi_weights(mesh, nxi);
    let xi = mesh.xi_cells();
    // prefix sums of the ξ-column per radius
    let prefix: Vec<Vec<f64>> = mesh.radii()[..nrad]
        .iter()
        .map(|&r| {
            let r2 = r * r;
            let mut acc = 0.0;
            let mut out = Vec::with_capacity(nxi + 1);
            out.push(0.0);
            for i in 0..nxi {
                acc += a[i] * (gamma_r2(t, xi[i].node, r2).norm_sqr() + gamma_r2(t, -xi[i].node, r2).norm_sqr());
                out.push(acc);
            }
            out
        })
        .collect();
    Ok((0..neta)
        .map(|j| {
            let e = &mesh.eta_cells()[j];
            let p = &prefix[e.radial];
            let col = if j < ex_eta { p[nxi] - p[ex_xi] } else { p[nxi] };
            SpectrumLine { eta: e.node, weight: eta_weight(mesh, j) * col }
        })
        .collect())
}

/// σ_n^disc(t) on the mesh's own level.
pub fn sigma_disc(mesh: &SpectralMesh, t: f64) -> Result<f64> {
    sigma_disc_level(mesh, mesh.n, t)
}

pub fn sigma_disc_level(mesh: &SpectralMesh, level: u32, t: f64) -> Result<f64> {
    Ok(variance_spectrum(mesh, t, level, None)?.iter().map(|l| l.weight).sum())
}

/// E[Ψ_n(s,x)Ψ_m(t,y)]: cell sum over D_n ∩ D_m of
/// |ξ|^{1−2H₀}Π|η_i|^{1−2H_i}γ_s·conj γ_t·e^{i⟨η,x−y⟩}·w, mirrors included.
pub fn covariance_oracle(
    mesh_n: &SpectralMesh,
    mesh_m: &SpectralMesh,
    s: f64,
    x: &[f64],
    t: f64,
    y: &[f64],
) -> Result<f64> {
    mesh_n.check_compatible(mesh_m)?;
    check_times(&[s, t])?;
    let d = mesh_n.d;
    if x.len() != d || y.len() != d {
        return Err(Error::Incompatible(format!("points must have dimension {d}")));
    }
    let mesh = if mesh_n.n >= mesh_m.n { mesh_n } else { mesh_m };
    let level = mesh_n.n.min(mesh_m.n);
    let (nxi, neta, nrad) = mesh.counts(level)?;
    let a = xi_weights(mesh, nxi);
    let xi = mesh.xi_cells();
    let q: Vec<(Complex64, Complex64)> = mesh.radii()[..nrad]
        .iter()
        .map(|&r| {
            let r2 = r * r;
            let mut qp = Complex64::new(0.0, 0.0);
            let mut qm = Complex64::new(0.0, 0.0);
            for i in 0..nxi {
                let k = xi[i].node;
                qp += a[i] * gamma_r2(s, k, r2) * gamma_r2(t, k, r2).conj();
                qm += a[i] * gamma_r2(s, -k, r2) * gamma_r2(t, -k, r2).conj();
            }
            (qp, qm)
        })
        .collect();
    let delta: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let mut total = 0.0;
    for j in 0..neta {
        let e = &mesh.eta_cells()[j];
        let phase = e.node.iter().zip(&delta).map(|(h, dl)| h * dl).sum::<f64>();
        let ph = Complex64::from_polar(1.0, phase);
        let (qp, qm) = q[e.radial];
        total += eta_weight(mesh, j) * (qp * ph + qm * ph.conj()).re;
    }
    Ok(total)
}

/// Ψ² − σ(t) pointwise, on the evaluated support.
pub fn wick_square(psi: &FieldTrajectory, sigma: &[f64]) -> Result<FieldTrajectory> {
    if psi.kind != FieldKind::Psi {
        return Err(Error::Incompatible(format!("Wick square needs a Psi_n trajectory, got {:?}", psi.kind)));
    }
    if sigma.len() != psi.times.len() {
        return Err(Error::Incompatible(format!(
            "{} renormalisation constants for {} times",
            sigma.len(),
            psi.times.len()
        )));
    }
    let mut out = psi.clone();
    out.kind = FieldKind::WickSquare;
    let all: Vec<usize>;
    let idx = match &psi.support {
        Some(s) => s,
        None => {
            all = (0..psi.grid.len()).collect();
            &all
        }
    };
    for (ti, &sg) in sigma.iter().enumerate() {
        let src = psi.at(ti).to_vec();
        let dst = out.at_mut(ti);
        for &g in idx {
            dst[g] = src[g] * src[g] - sg;
        }
    }
    Ok(out)
}

/// Σ_j V_j cos⟨η_j, z⟩ at each lag.
fn stationary_covariance(lines: &[SpectrumLine], lags: &[[f64; 2]], d: usize) -> Vec<f64> {
    let pts = PointSet::from_points(lags);
    let (xs, ys, idx) = pts.parts();
    let nl = lines.len();
    let table = |coords: &[f64], axis: usize| -> Vec<Complex64> {
        coords.iter().flat_map(|&z| lines.iter().map(move |l| Complex64::from_polar(1.0, l.eta[axis] * z))).collect()
    };
    let e1 = table(xs, 0);
    let e2 = if d == 2 { table(ys, 1) } else { Vec::new() };
    idx.iter()
        .map(|&(ix, iy)| {
            let r1 = &e1[ix * nl..(ix + 1) * nl];
            if d == 1 {
                lines.iter().zip(r1).map(|(l, p)| l.weight * p.re).sum()
            } else {
                let r2 = &e2[iy * nl..(iy + 1) * nl];
                lines.iter().zip(r1.iter().zip(r2)).map(|(l, (p, q))| l.weight * (p * q).re).sum()
            }
        })
        .collect()
}

/// E‖F⁻¹((1+|k|²)^{s/2}F(p·X))‖²_{L²} on the grid, for a centered field X
/// whose covariance E[X(x)X(y)] = cov(x − y) depends on the lag only:
/// vol·Σ_z κ_s(z)A_p(z)cov(z), with A_p the autocorrelation of the profile
/// and κ_s the periodic kernel of (1 − Δ)^s.
///
/// The profile must vanish outside a box of half-width < L/2.
pub fn lag_quadratic_form(grid: &Grid, profile: &[f64], s: f64, cov: impl Fn(&[[f64; 2]]) -> Vec<f64>) -> Result<f64> {
    if profile.len() != grid.len() {
        return Err(Error::Incompatible("profile does not match the grid".into()));
    }
    let n = grid.n;
    let support: Vec<usize> = (0..grid.len()).filter(|&i| profile[i] != 0.0).collect();
    if support.is_empty() {
        return Ok(0.0);
    }
    let axis = |i: usize, k: usize| {
        if grid.d == 1 {
            i
        } else if k == 0 {
            i / n
        } else {
            i % n
        }
    };
    let mut reach = 0usize;
    for k in 0..grid.d {
        let lo = support.iter().map(|&i| axis(i, k)).min().unwrap();
        let hi = support.iter().map(|&i| axis(i, k)).max().unwrap();
        reach = reach.max(hi - lo);
    }
    if 2 * reach >= n {
        return Err(Error::Config("profile support too wide for a lag-unique quadratic form".into()));
    }
    let ops = SpectralOps::new(grid);
    let coeffs = ops.forward(profile);
    let auto = ops.inverse_real(coeffs.iter().map(|c| Complex64::new(c.norm_sqr(), 0.0)).collect());
    let kernel = ops.inverse_real((0..grid.len()).map(|i| Complex64::new((1.0 + grid.k2(i)).powf(s), 0.0)).collect());

    let r = reach as i64;
    let offsets: Vec<i64> = (-r..=r).collect();
    let lag_ids: Vec<Vec<i64>> = match grid.d {
        1 => offsets.iter().map(|&a| vec![a]).collect(),
        _ => offsets.iter().flat_map(|&a| offsets.iter().map(move |&b| vec![a, b])).collect(),
    };
    let dx = grid.dx();
    let lags: Vec<[f64; 2]> =
        lag_ids.iter().map(|l| [l[0] as f64 * dx, l.get(1).map_or(0.0, |&b| b as f64 * dx)]).collect();
    let c = cov(&lags);
    let wrap = |a: i64| a.rem_euclid(n as i64) as usize;
    let mut total = 0.0;
    for (l, cv) in lag_ids.iter().zip(c) {
        let flat = match grid.d {
            1 => wrap(l[0]),
            _ => wrap(l[0]) * n + wrap(l[1]),
        };
        total += kernel[flat] * auto[flat] * cv;
    }
    Ok(total * grid.cell_volume())
}

/// E‖χ²·Wick_n(t,·)‖²_{H^{−2α}} from Isserlis: E[W(x)W(y)] = 2C(x−y)².
pub fn wick_norm_exact(
    mesh: &SpectralMesh,
    level: u32,
    t: f64,
    grid: &Grid,
    chi: &CutoffFn,
    alpha: f64,
) -> Result<f64> {
    chi.check_grid(grid)?;
    let lines = variance_spectrum(mesh, t, level, None)?;
    let profile: Vec<f64> = chi.sample(grid).iter().map(|c| c * c).collect();
    lag_quadratic_form(grid, &profile, -2.0 * alpha, |lags| {
        stationary_covariance(&lines, lags, mesh.d).into_iter().map(|c| 2.0 * c * c).collect()
    })
}

/// Level-to-level increments E‖χ(Ψ_{n+1} − Ψ_n)(t)‖²_{H^s}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyDecay {
    pub levels: Vec<u32>,
    pub exact: Vec<f64>,
    pub monte_carlo: Option<Vec<Estimate>>,
    /// Least-squares slope of log₂(exact) against n.
    pub log2_slope: f64,
}

impl CauchyDecay {
    pub fn strictly_decreasing(&self) -> bool {
        self.exact.windows(2).all(|w| w[1] < w[0])
    }
}

/// A pair (s,x), (t,y) at which E[Ψ_n(s,x)Ψ_n(t,y)] is probed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub s: f64,
    pub x: Vec<f64>,
    pub t: f64,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub probe: Probe,
    pub oracle: f64,
    pub estimate: Estimate,
}

impl ProbeResult {
    pub fn z_score(&self) -> f64 {
        self.estimate.z_score(self.oracle)
    }
}

/// Monte Carlo of Ψ_n(s,x)Ψ_n(t,y) against [`covariance_oracle`] at every
/// probe, from `samples` draws of `mesh`.
pub fn covariance_check(mesh: &SpectralMesh, probes: &[Probe], samples: usize, seed: u64) -> Result<Vec<ProbeResult>> {
    let d = mesh.d;
    let mut times: Vec<f64> = probes.iter().flat_map(|p| [p.s, p.t]).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut pts = Vec::with_capacity(2 * probes.len());
    for p in probes {
        if p.x.len() != d || p.y.len() != d {
            return Err(Error::Incompatible(format!("probe points must have dimension {d}")));
        }
        for q in [&p.x, &p.y] {
            pts.push([q[0], if d == 2 { q[1] } else { 0.0 }]);
        }
    }
    let np = pts.len();
    let ev = PsiEvaluator::new(mesh, mesh.n, &times, PointSet::from_points(&pts))?;
    let tpos = |t: f64| times.iter().position(|&u| u == t).unwrap();
    let per_sample = (0..samples as u64)
        .into_par_iter()
        .map(|k| -> Result<Vec<f64>> {
            let draw = NoiseDraw::generate(mesh, seeding::sample_seed(seed, k));
            let (v, _) = ev.eval(&draw)?;
            Ok(probes
                .iter()
                .enumerate()
                .map(|(i, p)| v[tpos(p.s) * np + 2 * i] * v[tpos(p.t) * np + 2 * i + 1])
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    probes
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let col: Vec<f64> = per_sample.iter().map(|r| r[i]).collect();
            Ok(ProbeResult {
                probe: p.clone(),
                oracle: covariance_oracle(mesh, mesh, p.s, &p.x, p.t, &p.y)?,
                estimate: Estimate::from_samples(&col),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WickProbe {
    pub x: Vec<f64>,
    /// Sample mean of Ψ_n² − σ_n; zero in expectation.
    pub mean: Estimate,
    /// Sample mean of (Ψ_n² − σ_n)².
    pub second: Estimate,
    /// Isserlis value 2σ_n².
    pub isserlis: f64,
}

/// Moments of the Wick square Ψ_n(t,x)² − σ_n(t) at the given points.
pub fn wick_moments_check(
    mesh: &SpectralMesh,
    t: f64,
    points: &[Vec<f64>],
    samples: usize,
    seed: u64,
) -> Result<Vec<WickProbe>> {
    let d = mesh.d;
    let pts: Vec<[f64; 2]> = points
        .iter()
        .map(|p| {
            if p.len() != d {
                return Err(Error::Incompatible(format!("probe points must have dimension {d}")));
            }
            Ok([p[0], if d == 2 { p[1] } else { 0.0 }])
        })
        .collect::<Result<_>>()?;
    let sigma = sigma_disc(mesh, t)?;
    let ev = PsiEvaluator::new(mesh, mesh.n, &[t], PointSet::from_points(&pts))?;
    let per_sample = (0..samples as u64)
        .into_par_iter()
        .map(|k| -> Result<Vec<f64>> {
            let draw = NoiseDraw::generate(mesh, seeding::sample_seed(seed, k));
            Ok(ev.eval(&draw)?.0.iter().map(|v| v * v - sigma).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let w: Vec<f64> = per_sample.iter().map(|r| r[i]).collect();
            let w2: Vec<f64> = w.iter().map(|v| v * v).collect();
            WickProbe {
                x: p.clone(),
                mean: Estimate::from_samples(&w),
                second: Estimate::from_samples(&w2),
                isserlis: 2.0 * sigma * sigma,
            }
        })
        .collect())
}

/// E‖χ(Ψ_{hi} − Ψ_{lo})(t)‖²_{H^s} from the cell sums.
pub fn increment_norm_exact(
    mesh: &SpectralMesh,
    lo: u32,
    hi: u32,
    t: f64,
    grid: &Grid,
    chi: &CutoffFn,
    s: f64,
) -> Result<f64> {
    if lo >= hi {
        return Err(Error::Ordering(format!("increment needs lo < hi, got ({lo}, {hi})")));
    }
    chi.check_grid(grid)?;
    let lines = variance_spectrum(mesh, t, hi, Some(lo))?;
    lag_quadratic_form(grid, &chi.sample(grid), s, |lags| stationary_covariance(&lines, lags, mesh.d))
}

/// Increments for n in `levels` (each needs level n + 1 ≤ mesh.n). With
/// `mc = Some((samples, seed))` a Monte Carlo estimate from common draws
/// across levels is added.
pub fn cauchy_decay(
    mesh: &SpectralMesh,
    t: f64,
    grid: &Grid,
    chi: &CutoffFn,
    s: f64,
    levels: &[u32],
    mc: Option<(usize, u64)>,
) -> Result<CauchyDecay> {
    chi.check_grid(grid)?;
    if levels.is_empty() {
        return Err(Error::Config("no levels requested".into()));
    }
    let profile = chi.sample(grid);
    let mut exact = Vec::with_capacity(levels.len());
    for &n in levels {
        exact.push(increment_norm_exact(mesh, n, n + 1, t, grid, chi, s)?);
    }
    let log2_slope = if levels.len() >= 2 {
        let xs: Vec<f64> = levels.iter().map(|&n| n as f64).collect();
        let ys: Vec<f64> = exact.iter().map(|e| e.log2()).collect();
        linear_fit(&xs, &ys)?.slope
    } else {
        f64::NAN
    };

    let monte_carlo = match mc {
        None => None,
        Some((samples, seed)) => {
            let support = chi.support(grid);
            let pts = PointSet::from_grid(grid, &support);
            let mut needed: Vec<u32> = levels.iter().flat_map(|&n| [n, n + 1]).collect();
            needed.sort_unstable();
            needed.dedup();
            let evals =
                needed.iter().map(|&m| PsiEvaluator::new(mesh, m, &[t], pts.clone())).collect::<Result<Vec<_>>>()?;
            let ops = SpectralOps::new(grid);
            let chi_s: Vec<f64> = support.iter().map(|&g| profile[g]).collect();
            let per_sample = (0..samples as u64)
                .into_par_iter()
                .map(|k| -> Result<Vec<f64>> {
                    let draw = NoiseDraw::generate(mesh, seeding::sample_seed(seed, k));
                    let fields = evals.iter().map(|e| e.eval(&draw).map(|v| v.0)).collect::<Result<Vec<_>>>()?;
                    let at = |m: u32| &fields[needed.iter().position(|&x| x == m).unwrap()];
                    Ok(levels
                        .iter()
                        .map(|&n| {
                            let mut g = vec![0.0; grid.len()];
                            for (p, &gi) in support.iter().enumerate() {
                                g[gi] = chi_s[p] * (at(n + 1)[p] - at(n)[p]);
                            }
                            ops.h_norm_sqr(&g, s)
                        })
                        .collect())
                })
                .collect::<Result<Vec<_>>>()?;
            Some(
                (0..levels.len())
                    .map(|li| Estimate::from_samples(&per_sample.iter().map(|v| v[li]).collect::<Vec<_>>()))
                    .collect(),
            )
        }
    };
    Ok(CauchyDecay { levels: levels.to_vec(), exact, monte_carlo, log2_slope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral_noise::{synthesize_psi_on, HurstVector};

    fn mesh(h: &[f64], n: u32, res: usize) -> SpectralMesh {
        SpectralMesh::build(&HurstVector::new(h.to_vec()).unwrap(), n, res).unwrap()
    }

    #[test]
    fn covariance_check_agrees() {
        let h = HurstVector::new(vec![0.7, 0.6]).unwrap();
        let m = SpectralMesh::build(&h, 2, 4).unwrap();
        let probes = vec![
            Probe { s: 0.5, x: vec![0.1], t: 0.5, y: vec![0.1] },
            Probe { s: 0.3, x: vec![-0.4], t: 0.8, y: vec![0.6] },
        ];
        let res = covariance_check(&m, &probes, 3000, 4).unwrap();
        for r in &res {
            assert!(r.z_score() < 4.0, "{r:?}");
        }
        assert!(res[0].oracle > 0.0);
    }

    #[test]
    fn wick_moments_small() {
        let h = HurstVector::new(vec![0.35, 0.2]).unwrap();
        let m = SpectralMesh::build(&h, 2, 4).unwrap();
        let res = wick_moments_check(&m, 1.0, &[vec![0.0], vec![0.7]], 3000, 8).unwrap();
        for r in &res {
            assert!(r.mean.z_score(0.0) < 4.0 && r.second.z_score(r.isserlis) < 4.0, "{r:?}");
        }
    }

    #[test]
    fn oracle_basics() {
        let m = mesh(&[0.7, 0.6], 3, 4);
        assert_eq!(covariance_oracle(&m, &m, 0.0, &[0.1], 0.5, &[0.2]).unwrap(), 0.0);
        assert_eq!(sigma_disc(&m, 0.0).unwrap(), 0.0);
        for x in [0.0, 0.37, -1.2] {
            let c = covariance_oracle(&m, &m, 0.8, &[x], 0.8, &[x]).unwrap();
            let s = sigma_disc(&m, 0.8).unwrap();
            assert!(s > 0.0);
            assert!((c - s).abs() <= 1e-12 * s);
        }
        let other = mesh(&[0.7, 0.5], 3, 4);
        assert!(matches!(covariance_oracle(&m, &other, 1.0, &[0.0], 1.0, &[0.0]), Err(Error::Incompatible(_))));
    }

    #[test]
    fn cross_level_covariance_uses_the_intersection() {
        let big = mesh(&[0.35, 0.2], 4, 4);
        let small = big.truncate(2).unwrap();
        let a = covariance_oracle(&big, &small, 0.5, &[0.1], 1.0, &[0.3]).unwrap();
        let b = covariance_oracle(&small, &small, 0.5, &[0.1], 1.0, &[0.3]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sigma_disc_increases_in_time() {
        let m = mesh(&[0.3, 0.3], 4, 8);
        let vals: Vec<f64> = (1..=10).map(|k| sigma_disc(&m, k as f64 / 10.0).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] > w[0]), "{vals:?}");
    }

    #[test]
    fn spectrum_difference_is_consistent() {
        let m = mesh(&[0.35, 0.2], 4, 4);
        let s3 = sigma_disc_level(&m, 3, 1.0).unwrap();
        let s4 = sigma_disc_level(&m, 4, 1.0).unwrap();
        let diff: f64 = variance_spectrum(&m, 1.0, 4, Some(3)).unwrap().iter().map(|l| l.weight).sum();
        assert!((s4 - s3 - diff).abs() < 1e-12 * s4);
        assert!(variance_spectrum(&m, 1.0, 3, Some(3)).is_err());
    }

    #[test]
    fn wick_square_centering_and_errors() {
        let m = mesh(&[0.35, 0.2], 2, 4);
        let g = Grid::new(1, 64, 4.0).unwrap();
        let idx: Vec<usize> = (28..36).collect();
        let sigma = [0.0, sigma_disc(&m, 1.0).unwrap()];
        let mut means = vec![0.0; idx.len()];
        let n = 3000;
        let mut sq = vec![0.0; idx.len()];
        for k in 0..n {
            let draw = NoiseDraw::generate(&m, seeding::sample_seed(2, k));
            let psi = synthesize_psi_on(&draw, &g, &[0.0, 1.0], &idx).unwrap();
            let w = wick_square(&psi, &sigma).unwrap();
            assert!(w.at(0).iter().all(|&v| v == 0.0));
            for (p, &gi) in idx.iter().enumerate() {
                means[p] += w.at(1)[gi];
                sq[p] += w.at(1)[gi].powi(2);
            }
        }
        for p in 0..idx.len() {
            let mean = means[p] / n as f64;
            let var = sq[p] / n as f64 - mean * mean;
            assert!(mean.abs() <= 4.0 * (var / n as f64).sqrt());
        }
        let draw = NoiseDraw::generate(&m, 1);
        let psi = synthesize_psi_on(&draw, &g, &[1.0], &idx).unwrap();
        assert!(wick_square(&psi, &[1.0, 2.0]).is_err());
        assert!(wick_square(&wick_square(&psi, &[1.0]).unwrap(), &[1.0]).is_err());
    }

    #[test]
    fn lag_form_matches_direct_sum() {
        // white profile against a known covariance
        let g = Grid::new(1, 64, 4.0).unwrap();
        let chi = CutoffFn::centered(1, 0.5, 1.0).unwrap();
        let p = chi.sample(&g);
        let cov = |z: f64| (-z * z).exp();
        let fast = lag_quadratic_form(&g, &p, -0.4, |lags| lags.iter().map(|l| cov(l[0])).collect()).unwrap();
        // direct: vol Σ_{x,y} p p κ cov with κ from the multiplier applied to deltas
        let ops = SpectralOps::new(&g);
        let mut direct = 0.0;
        for x in 0..g.len() {
            let mut delta = vec![0.0; g.len()];
            delta[x] = 1.0;
            let col = ops.apply_multiplier(&delta, |k2| (1.0 + k2).powf(-0.4));
            for y in 0..g.len() {
                direct += p[x] * p[y] * col[y] * cov(g.coord(x) - g.coord(y));
            }
        }
        direct *= g.cell_volume();
        assert!((fast - direct).abs() < 1e-12 * direct.abs());
    }

    #[test]
    fn cauchy_exact_matches_monte_carlo() {
        let m = mesh(&[0.35, 0.2], 4, 4);
        let g = Grid::new(1, 256, 4.0).unwrap();
        let chi = CutoffFn::centered(1, 0.5, 1.0).unwrap();
        let r = cauchy_decay(&m, 1.0, &g, &chi, -0.12, &[2, 3], Some((400, 8))).unwrap();
        let mc = r.monte_carlo.as_ref().unwrap();
        for (e, est) in r.exact.iter().zip(mc) {
            assert!(est.z_score(*e) < 4.0, "{est:?} vs {e}");
        }
    }

    #[test]
    fn wick_exact_matches_monte_carlo() {
        let m = mesh(&[0.35, 0.2], 3, 4);
        let g = Grid::new(1, 128, 4.0).unwrap();
        let chi = CutoffFn::centered(1, 0.5, 1.0).unwrap();
        let exact = wick_norm_exact(&m, 3, 1.0, &g, &chi, 0.12).unwrap();
        let support = chi.support(&g);
        let sig = sigma_disc(&m, 1.0).unwrap();
        let ops = SpectralOps::new(&g);
        let c2: Vec<f64> = chi.sample(&g).iter().map(|c| c * c).collect();
        let vals: Vec<f64> = (0..600)
            .map(|k| {
                let draw = NoiseDraw::generate(&m, seeding::sample_seed(77, k));
                let psi = synthesize_psi_on(&draw, &g, &[1.0], &support).unwrap();
                let w = wick_square(&psi, &[sig]).unwrap();
                let f: Vec<f64> = w.at(0).iter().zip(&c2).map(|(a, b)| a * b).collect();
                ops.h_norm_sqr(&f, -0.24)
            })
            .collect();
        let est = Estimate::from_samples(&vals);
        assert!(est.z_score(exact) < 4.0, "{est:?} vs {exact}");
    }
}
