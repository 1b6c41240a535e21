use fracheat_core::renorm::{sigma_continuum, RenormTable};
use fracheat_core::solver::{picard_solve, stochastic_inputs, u_trajectory, InputSynthesizer, Regime, SolverConfig};
use fracheat_core::spectral_noise::{synthesize_psi, NoiseDraw};
use fracheat_core::{CutoffFn, FieldKind, Grid, HurstVector, SpectralMesh};

fn setup(h: &[f64], regime: Regime, alpha: f64) -> (HurstVector, SolverConfig) {
    let h = HurstVector::new(h.to_vec()).unwrap();
    let grid = Grid::new(1, 128, 4.0).unwrap();
    let mut cfg = SolverConfig::new(regime, &h, alpha, grid, CutoffFn::centered(1, 1.0, 1.8).unwrap()).unwrap();
    cfg.horizon = 0.1;
    cfg.dt = 0.02;
    (h, cfg)
}

#[test]
fn coarse_inputs_from_fine_draw_match_prefix_draw() {
    let (h, cfg) = setup(&[0.35, 0.2], Regime::Rough, 0.12);
    let fine = SpectralMesh::build(&h, 4, 4).unwrap();
    let coarse = fine.truncate(2).unwrap();
    let draw = NoiseDraw::generate(&fine, 5);
    let times = cfg.times();
    let a = InputSynthesizer::new(&fine, 2, &cfg, &times).unwrap().inputs(&draw).unwrap();
    let sub = NoiseDraw::generate_prefix(&coarse, &draw).unwrap();
    let b = stochastic_inputs(&sub, &cfg, &times).unwrap();
    assert_eq!(a.0.values, b.0.values);
    assert_eq!(a.1.unwrap().values, b.1.unwrap().values);
    assert_eq!(a.0.n, 2);
}

#[test]
fn noise_driven_solves_and_dumps() {
    for (hv, regime, alpha) in [([0.7, 0.6], Regime::Regular, 0.0), ([0.35, 0.2], Regime::Rough, 0.12)] {
        let (h, cfg) = setup(&hv, regime, alpha);
        let mesh = SpectralMesh::build(&h, 3, 4).unwrap();
        let draw = NoiseDraw::generate(&mesh, 21);
        let (psi, psi2) = stochastic_inputs(&draw, &cfg, &cfg.times()).unwrap();
        let (state, t0) = picard_solve(&cfg, &psi, psi2.as_ref()).unwrap();
        assert!(state.residual <= cfg.tol && t0 > 0.0);
        assert_eq!(state.weighted_norm.is_some(), regime == Regime::Rough);
        let u = u_trajectory(&state, &psi);
        assert_eq!(u.kind, FieldKind::U);
        let mut buf = Vec::new();
        u.write_ndjson(&mut buf).unwrap();
        let first: serde_json::Value =
            serde_json::from_str(std::str::from_utf8(&buf).unwrap().lines().next().unwrap()).unwrap();
        assert_eq!(first["kind"], "u");
        assert_eq!(first["seed"], 21);
        // u equals v + Ψ where ρ = 1
        let full = synthesize_psi(&draw, &cfg.grid, &cfg.times()).unwrap();
        let last = u.times.len() - 1;
        let mid = cfg.grid.n / 2;
        assert!((u.at(last)[mid] - state.v.at(last)[mid] - full.at(last)[mid]).abs() < 1e-12);
    }
}

#[test]
fn renorm_table_orders_and_discrete_column() {
    let h = HurstVector::new(vec![0.7, 0.6]).unwrap();
    let table = RenormTable::build(&h, 1.0, &[1, 2, 3], Some(8)).unwrap();
    table.check_invariants().unwrap();
    for row in &table.rows {
        let d = row.sigma_disc.unwrap();
        assert!((d / row.sigma_continuum - 1.0).abs() < 0.05, "{row:?}");
    }
    assert_eq!(table.rows[2].sigma_continuum, sigma_continuum(&h, 3, 1.0).unwrap());
}

#[test]
fn discrete_sigma_converges_under_refinement() {
    let h = HurstVector::new(vec![0.7, 0.6]).unwrap();
    let cont = sigma_continuum(&h, 4, 1.0).unwrap();
    let errs: Vec<f64> = [4, 8, 16]
        .iter()
        .map(|&res| {
            let m = SpectralMesh::build(&h, 4, res).unwrap();
            (fracheat_core::spectral_noise::sigma_disc(&m, 1.0).unwrap() - cont).abs()
        })
        .collect();
    let order = (errs[1] / errs[2]).log2();
    assert!(errs[2] < errs[1] && errs[1] < errs[0], "{errs:?}");
    assert!(order >= 1.0, "order {order}, errors {errs:?}");
}
