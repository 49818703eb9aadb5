use gibbslab::configspace::{fold, BoxDomain, Configuration};
use gibbslab::diagnostics::{pair_moment_expansion, pair_power_direct};
use gibbslab::dynamics::drift_uncapped;
use gibbslab::potential::distance;
use gibbslab::PairPotentialModel;
use proptest::prelude::*;

fn points(d: usize, max: usize, side: f64) -> impl Strategy<Value = Vec<f64>> {
    (0..=max).prop_flat_map(move |n| prop::collection::vec(0.0..side, n * d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fold_lands_in_the_box_and_is_idempotent(x in -1e3f64..1e3, l in 0.1f64..10.0) {
        let y = fold(x, l);
        prop_assert!((0.0..=l).contains(&y));
        prop_assert_eq!(fold(y, l), y);
        // Period 2l and mirror symmetry about 0.
        prop_assert!((fold(x + 2.0 * l, l) - y).abs() < 1e-9 * (1.0 + x.abs()));
        prop_assert!((fold(-x, l) - y).abs() < 1e-9 * (1.0 + x.abs()));
    }

    #[test]
    fn pair_drift_carries_no_net_force(coords in points(2, 6, 4.0), beta in 0.1f64..3.0) {
        let lj = PairPotentialModel::lennard_jones(2, 1.0, 1.0).unwrap();
        let ss = PairPotentialModel::soft_sphere(2, 1.0, 1.0, 12.0).unwrap();
        for pot in [lj, ss] {
            let mut out = vec![0.0; coords.len()];
            if drift_uncapped(&pot, beta, &coords, &mut out).is_err() {
                continue;
            }
            let scale: f64 = out.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            for a in 0..2 {
                let net: f64 = out.iter().skip(a).step_by(2).sum();
                prop_assert!(net.abs() <= 1e-10 * scale, "net force {net} against scale {scale}");
            }
        }
    }

    #[test]
    fn expansion_matches_direct_powers(coords in points(1, 7, 5.0), a in 0.1f64..2.0, k in 0.1f64..3.0) {
        let dom = BoxDomain::cube(1, 5.0).unwrap();
        let g = Configuration::from_flat(dom, coords).unwrap();
        let f = |x: &[f64], y: &[f64]| a + (-k * distance(x, y)).exp();
        for p in [2, 3] {
            let direct = pair_power_direct(&f, &g, p);
            let e = pair_moment_expansion(&f, &g, p).unwrap();
            prop_assert!((e - direct).abs() <= 1e-12 * direct.abs().max(1.0), "p = {p}: {e} vs {direct}");
        }
    }

    #[test]
    fn records_round_trip(coords in points(2, 5, 3.0)) {
        let dom = BoxDomain::new(vec![3.0, 3.0]).unwrap();
        let g = Configuration::from_flat(dom, coords).unwrap();
        let back = Configuration::from_record(&g.to_record()).unwrap();
        prop_assert_eq!(back.canonical_coords(), g.canonical_coords());
    }
}
