use criterion::{black_box, criterion_group, criterion_main, Criterion};
use fracheat_core::heatkernel::{gamma_abs2, gamma_truncated};
use fracheat_core::quad::integrate_singular;
use fracheat_core::sobolev_grid::{band_limited_field, SpectralOps};
use fracheat_core::spectral_noise::{PointSet, PsiEvaluator};
use fracheat_core::{seeding, Grid, HurstVector, NoiseDraw, SobolevParams, SpectralMesh, Tolerance};

fn heat_kernel(c: &mut Criterion) {
    c.bench_function("gamma_abs2 x1000", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for k in 0..1000 {
                let x = k as f64 * 1e-3;
                acc += gamma_abs2(black_box(0.7), 40.0 * x - 20.0, 4.0 * x).unwrap();
            }
            acc
        })
    });
    c.bench_function("gamma_truncated n=6", |b| b.iter(|| gamma_truncated(1.0, black_box(0.8), 0.35, 6).unwrap()));
}

fn quadrature(c: &mut Criterion) {
    c.bench_function("integrate_singular x^-0.7/(1+x)", |b| {
        b.iter(|| {
            integrate_singular(
                |x| x.powf(-0.7) / (1.0 + x),
                0.0,
                1.0,
                black_box(-0.7),
                0.0,
                Tolerance::new(1e-13, 1e-12),
            )
            .unwrap()
        })
    });
}

fn synthesis(c: &mut Criterion) {
    let h = HurstVector::new(vec![0.35, 0.2]).unwrap();
    let mesh = SpectralMesh::build(&h, 5, 8).unwrap();
    let grid = Grid::new(1, 256, 4.0).unwrap();
    let pts: Vec<[f64; 2]> = (0..grid.len()).map(|i| grid.point(i)).collect();
    let ev = PsiEvaluator::new(&mesh, 5, &[0.5, 1.0], PointSet::from_points(&pts)).unwrap();
    c.bench_function("noise draw d=1 n=5", |b| {
        b.iter(|| NoiseDraw::generate(&mesh, seeding::sample_seed(1, black_box(3))))
    });
    let draw = NoiseDraw::generate(&mesh, 7);
    c.bench_function("psi 256 points x 2 times d=1 n=5", |b| b.iter(|| ev.eval(black_box(&draw)).unwrap()));
}

fn sobolev(c: &mut Criterion) {
    for n in [256usize, 1024] {
        let grid = Grid::new(1, n, 4.0).unwrap();
        let ops = SpectralOps::new(&grid);
        let f = band_limited_field(&grid, 3, 1.0);
        c.bench_function(&format!("bessel_norm W^(-0.12,2) N={n}"), |b| {
            b.iter(|| ops.bessel_norm(black_box(&f), SobolevParams::new(-0.12, 2.0).unwrap()).unwrap())
        });
    }
    let grid = Grid::new(2, 128, 4.0).unwrap();
    let ops = SpectralOps::new(&grid);
    let f = band_limited_field(&grid, 3, 1.0);
    c.bench_function("apply_heat 128x128", |b| b.iter(|| ops.apply_heat(black_box(&f), 0.01).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = heat_kernel, quadrature, synthesis, sobolev
}
criterion_main!(benches);
