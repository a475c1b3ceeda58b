use apfbm::ap::theta_squared_distances;
use apfbm::sde::DriftSpec;
use apfbm::skorokhod::malliavin_kernel;
use apfbm::stats::{pairwise_sum, quantile};
use apfbm::{
    fbm_covariance, fgn_autocovariance, sample_replicates, simulate_drift, translate_solution, wiener_shift_path,
    DerivativeRule, HurstIndex, KernelOptions, TimeGrid, TwoSidedSetup,
};
use proptest::prelude::*;

fn hurst() -> impl Strategy<Value = HurstIndex> {
    (0.51f64..0.99).prop_map(|h| HurstIndex::new(h).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn covariance_is_symmetric_and_bounded(h in hurst(), s in -50.0f64..50.0, t in -50.0f64..50.0) {
        let c = fbm_covariance(s, t, h);
        prop_assert_eq!(c, fbm_covariance(t, s, h));
        let bound = (fbm_covariance(s, s, h) * fbm_covariance(t, t, h)).sqrt();
        prop_assert!(c.abs() <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn fgn_autocovariance_positive_and_decreasing(h in hurst(), k in 1u64..100_000) {
        let a = fgn_autocovariance(k, h);
        let b = fgn_autocovariance(k + 1, h);
        prop_assert!(a > 0.0 && b > 0.0);
        prop_assert!(b <= a);
    }

    #[test]
    fn grid_index_roundtrip(offset in -500i64..500, dt in 0.001f64..1.0, n in 1usize..400, pick in 0usize..400) {
        let g = TimeGrid::new(offset, dt, n).unwrap();
        let k = pick % n;
        prop_assert_eq!(g.index_of(g.time(k)).unwrap(), k);
    }

    #[test]
    fn pairwise_sum_matches_naive(xs in proptest::collection::vec(-1e3f64..1e3, 0..300)) {
        let naive: f64 = xs.iter().sum();
        let scale: f64 = xs.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
        prop_assert!((pairwise_sum(&xs) - naive).abs() <= 1e-12 * scale);
    }

    #[test]
    fn quantiles_are_monotone(xs in proptest::collection::vec(-10.0f64..10.0, 1..100), p in 0.0f64..1.0, q in 0.0f64..1.0) {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        prop_assert!(quantile(&xs, lo) <= quantile(&xs, hi));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn shifts_compose_exactly(h in hurst(), seed in any::<u64>(), s1 in -60i64..60, s2 in -60i64..60) {
        let dt = 0.05;
        let grid = TimeGrid::covering(-8.0, 8.0, dt).unwrap();
        let ens = sample_replicates::<f64>(grid, h, 1, 0..1, seed, None).unwrap();
        let win = (-1.0, 1.0);
        let p = wiener_shift_path(&ens, s1 as f64 * dt, 0, 0, win).unwrap();
        let twice = p.compose(s2 as f64 * dt).unwrap().values();
        let once = wiener_shift_path(&ens, (s1 + s2) as f64 * dt, 0, 0, win).unwrap().values();
        prop_assert_eq!(twice, once);
        let zero = wiener_shift_path(&ens, 0.0, 0, 0, win).unwrap();
        prop_assert_eq!(zero.at(grid.index_of_zero().unwrap()), 0.0);
    }

    #[test]
    fn replicate_streams_ignore_chunking(h in hurst(), seed in any::<u64>(), a in 0u64..6, len in 1u64..4) {
        let grid = TimeGrid::covering(-2.0, 3.0, 0.05).unwrap();
        let all = sample_replicates::<f64>(grid, h, 2, 0..10, seed, None).unwrap();
        let part = sample_replicates::<f64>(grid, h, 2, a..a + len, seed, None).unwrap();
        for r in 0..len as usize {
            for c in 0..2 {
                prop_assert_eq!(part.path(r, c), all.path(a as usize + r, c));
            }
        }
    }

    #[test]
    fn autonomous_translation_is_identity(seed in any::<u64>(), steps in 0usize..100) {
        let spec = DriftSpec::<f64>::catalog("fou", 1.0, 1.0).unwrap();
        let dt = 0.05;
        let setup = TwoSidedSetup { history: 5.0, ..TwoSidedSetup::new(HurstIndex::new(0.7).unwrap(), dt, 2.0, seed) };
        let paths = simulate_drift(&spec, &setup, 0..2).unwrap();
        let tau = steps as f64 * dt;
        let d = theta_squared_distances(&paths, tau, &[0.0, 1.0, 2.0]).unwrap();
        for v in d.iter().flatten() {
            prop_assert!(*v < 1e-20, "{}", v);
        }
        if steps == 0 {
            prop_assert_eq!(translate_solution(&paths, 0.0).unwrap().states, paths.states);
        }
    }

    #[test]
    fn kernel_bound_holds(h in hurst(), theta in 0.5f64..2.0, seed in any::<u64>(), which in 0usize..4) {
        let name = ["example1", "example2", "example3", "example4"][which];
        let spec = DriftSpec::<f64>::catalog(name, theta, 1.0).unwrap();
        let setup = TwoSidedSetup::new(h, 0.05, 4.0, seed);
        let paths = simulate_drift(&spec, &setup, 0..2).unwrap();
        let options = KernelOptions { rule: DerivativeRule::Trapezoid, ..KernelOptions::default() };
        let kernel = malliavin_kernel(&paths, theta, (0.0, 4.0), options).unwrap();
        let report = kernel.bound_check(spec.sigma_sup, spec.theta_lower, spec.m_lower);
        prop_assert!(report.holds(), "max ratio {}", report.max_ratio);
    }
}

#[test]
fn single_precision_tracks_double() {
    let h = HurstIndex::new(0.7).unwrap();
    let grid = TimeGrid::covering(-1.0, 1.0, 1.0 / 64.0).unwrap();
    let a = sample_replicates::<f64>(grid, h, 1, 0..3, 9, None).unwrap();
    let b = sample_replicates::<f32>(grid, h, 1, 0..3, 9, None).unwrap();
    for r in 0..3 {
        for (x, y) in a.path(r, 0).iter().zip(b.path(r, 0)) {
            assert!((x - *y as f64).abs() < 1e-4, "{x} vs {y}");
        }
    }
}
