use fracheat_core::heatkernel::{gamma_abs2, gamma_t};
use fracheat_core::seeding;
use fracheat_core::sobolev_grid::{band_limited_field, Grid, SpectralOps};
use fracheat_core::spectral_noise::{HurstVector, RegimeTag, SpectralMesh};
use fracheat_core::stats::median;
use proptest::prelude::*;

fn hurst_1d() -> impl Strategy<Value = HurstVector> {
    (0.05f64..0.95, 0.05f64..0.95).prop_map(|(a, b)| HurstVector::new(vec![a, b]).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mesh_mirror_is_an_involution(h in hurst_1d(), n in 1u32..4, res in 1usize..5) {
        let m = SpectralMesh::build(&h, n, res).unwrap();
        for c in m.cells().step_by(37) {
            let back = m.cell(c.mirror);
            prop_assert_eq!(back.mirror, c.id);
            for k in 0..3 {
                prop_assert_eq!(back.node[k], -c.node[k]);
            }
            prop_assert_eq!(back.weight, c.weight);
        }
    }

    #[test]
    fn mesh_levels_are_prefixes(h in hurst_1d(), n in 2u32..5) {
        let big = SpectralMesh::build(&h, n, 2).unwrap();
        let small = big.truncate(n - 1).unwrap();
        let fresh = SpectralMesh::build(&h, n - 1, 2).unwrap();
        prop_assert_eq!(small.xi_cells(), fresh.xi_cells());
        prop_assert_eq!(small.eta_cells(), fresh.eta_cells());
        prop_assert_eq!(&big.xi_cells()[..small.xi_cells().len()], small.xi_cells());
        prop_assert!((big.total_weight() - big.domain_measure()).abs() < 1e-9 * big.domain_measure());
    }

    #[test]
    fn hurst_tags_are_consistent(h in hurst_1d()) {
        let tags = h.tags();
        prop_assert_eq!(tags.contains(&RegimeTag::Regular), h.alpha_h() > 0.0);
        prop_assert!(!(tags.contains(&RegimeTag::Regular) && tags.contains(&RegimeTag::RoughWick)));
        prop_assert!(!(tags.contains(&RegimeTag::Explosive) && tags.contains(&RegimeTag::RoughWick)));
        prop_assert!(!tags.contains(&RegimeTag::Rough2D));
        prop_assert!((h.alpha_h() + h.kappa()).abs() < 1e-12);
    }

    #[test]
    fn hurst_rejects_out_of_range(a in prop_oneof![-1.0f64..=0.0, 1.0f64..2.0]) {
        let msg = HurstVector::new(vec![0.5, a]).unwrap_err().to_string();
        prop_assert!(msg.contains("Hurst component out of (0,1)"));
    }

    #[test]
    fn gamma_closed_form_modulus(t in 0.0f64..1.0, xi in -50.0f64..50.0, r in 0.0f64..10.0) {
        let g = gamma_t(t, xi, r).unwrap();
        let a2 = gamma_abs2(t, xi, r).unwrap();
        prop_assert!((g.norm_sqr() - a2).abs() <= 1e-12 * (1.0 + a2));
        // |γ_t| ≤ t since |e^{(iξ − r²)s}| ≤ 1 under the integral
        prop_assert!(g.norm() <= t * (1.0 + 1e-12) + 1e-15);
        prop_assert_eq!(gamma_t(t, -xi, r).unwrap(), g.conj());
    }

    #[test]
    fn bessel_potential_round_trip(seed in 0u64..1000, s in -2.0f64..2.0) {
        let g = Grid::new(1, 64, 3.0).unwrap();
        let ops = SpectralOps::new(&g);
        let f = band_limited_field(&g, seed, 1.0);
        let back = ops.bessel_potential(&ops.bessel_potential(&f, s), -s);
        let err = f.iter().zip(&back).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        prop_assert!(err < 1e-11);
    }

    #[test]
    fn sample_seeds_distinct(master in any::<u64>(), a in 0u64..1000, b in 0u64..1000) {
        prop_assume!(a != b);
        prop_assert_ne!(seeding::sample_seed(master, a), seeding::sample_seed(master, b));
        prop_assert_eq!(seeding::sample_seed(master, a), seeding::sample_seed(master, a));
    }

    #[test]
    fn median_bounds(xs in prop::collection::vec(-1e6f64..1e6, 1..40)) {
        let m = median(&xs);
        let lo = xs.iter().cloned().fold(f64::MAX, f64::min);
        let hi = xs.iter().cloned().fold(f64::MIN, f64::max);
        prop_assert!(m >= lo && m <= hi);
        let below = xs.iter().filter(|&&x| x < m).count();
        prop_assert!(below <= xs.len() / 2);
    }
}
