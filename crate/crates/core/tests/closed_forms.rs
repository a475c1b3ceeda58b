//! Library results against closed forms and independent reimplementations.

use std::sync::Arc;

use apfbm::estimator::{estimate_fixed_point, estimate_oracle, u_t, v_t, FixedPointOptions};
use apfbm::sde::{DriftSpec, Periodicity};
use apfbm::skorokhod::{malliavin_kernel, skorokhod_batch, TestFunction, TEST_FUNCTIONS};
use apfbm::wiener::{hls_constant, integrand_catalog};
use apfbm::{
    hnorm, memin_bound, simulate_drift, wiener_second_moment, DeterministicIntegrand, HurstIndex, KernelOptions,
    Quadrature, TwoSidedSetup,
};

fn h(v: f64) -> HurstIndex {
    HurstIndex::new(v).unwrap()
}

/// `H(2H−1) ∬_{[0,1]²} u v |u−v|^{2H−2} du dv = 1 / (2H + 2)` via Beta
/// integrals.
#[test]
fn linear_integrand_second_moment() {
    let f = integrand_catalog("linear").unwrap();
    for hv in [0.55, 0.6, 0.7, 0.8, 0.95] {
        let got = wiener_second_moment(&f, (0.0, 1.0), h(hv), &Quadrature::default()).unwrap();
        let want = 1.0 / (2.0 * hv + 2.0);
        assert!((got - want).abs() < 1e-6 * want, "H={hv}: {got} vs {want}");
    }
}

/// Indicators of `[a, b]` and of two disjoint intervals against fBm
/// increment covariances.
#[test]
fn indicator_second_moments() {
    let hv = 0.7;
    let var = |s: f64, t: f64| (t - s).powf(2.0 * hv);
    let one = integrand_catalog("one").unwrap();
    for (a, b) in [(0.0, 1.0), (-2.0, 0.5), (3.0, 7.25)] {
        let got = wiener_second_moment(&one, (a, b), h(hv), &Quadrature::default()).unwrap();
        assert!((got - var(a, b)).abs() < 1e-9 * var(a, b));
    }
    // 1_{[0,1]} + 2·1_{[2,3]}: Var B(0,1) + 4 Var B(2,3) + 4 Cov.
    let f = DeterministicIntegrand::scalar("step pair", |u| {
        if u < 1.0 {
            1.0
        } else if (2.0..=3.0).contains(&u) {
            2.0
        } else {
            0.0
        }
    });
    let cov = 0.5 * (3f64.powf(2.0 * hv) + 1.0 - 2.0 * 2f64.powf(2.0 * hv));
    let want = 1.0 + 4.0 + 4.0 * cov;
    let got = wiener_second_moment(&f, (0.0, 3.0), h(hv), &Quadrature { cells_per_unit: 512.0, ..Quadrature::default() }).unwrap();
    assert!((got - want).abs() < 1e-3 * want, "{got} vs {want}");
}

/// The HLS bound dominates the |H| norm for every catalog integrand.
#[test]
fn hardy_littlewood_sobolev_bound() {
    for name in ["one", "linear", "exp_decay", "sign_step", "cosine", "sine", "quadratic", "sqrt", "gauss", "peak"] {
        let f = integrand_catalog(name).unwrap();
        for hv in [0.6, 0.75, 0.9] {
            let q = Quadrature::default();
            let norm = hnorm(&f, (0.0, 2.0), h(hv), &q).unwrap();
            let bound = memin_bound(&f, (0.0, 2.0), h(hv), hls_constant(h(hv)), &q).unwrap();
            assert!(norm <= bound * (1.0 + 1e-9), "{name} H={hv}: {norm} > {bound}");
        }
    }
}

/// `b₀(t, x) = x/2 + cos t` keeps the noiseless path away from zero.
fn forced_spec(sigma: f64) -> DriftSpec<f64> {
    DriftSpec::custom(
        "forced",
        1.3,
        Arc::new(|t: f64, x: f64| 0.5 * x + t.cos()),
        Some(Arc::new(|_t: f64, _x: f64| 0.5)),
        Arc::new(move |_| sigma),
        sigma,
        0.5,
        0.5,
        Periodicity::Periodic(2.0 * std::f64::consts::PI),
    )
}

#[test]
fn noiseless_paths_recover_theta() {
    let spec = forced_spec(0.0);
    let setup = TwoSidedSetup::new(h(0.7), 0.05, 30.0, 3);
    let paths = simulate_drift(&spec, &setup, 0..3).unwrap();
    let window = (0.0, 30.0);
    for r in estimate_oracle(&paths, spec.theta, window, &KernelOptions::default()).unwrap() {
        assert_eq!(r.u_t, 0.0);
        assert_eq!(r.theta_hat, spec.theta);
    }
    let options = FixedPointOptions { tol: 1e-12, ..FixedPointOptions::default() };
    for r in estimate_fixed_point(&paths, None, window, &options).unwrap() {
        assert!((r.theta_hat - spec.theta).abs() < 1e-9, "{}", r.theta_hat);
        assert!(r.converged);
    }
}

/// `V_T` against a direct trapezoid sum over the stored states, and the
/// oracle estimate against `ϑ − U_T / V_T` from the separate entry points.
#[test]
fn oracle_decomposition_identity() {
    let spec = forced_spec(0.8);
    let setup = TwoSidedSetup::new(h(0.7), 0.05, 20.0, 11);
    let paths = simulate_drift(&spec, &setup, 0..4).unwrap();
    let window = (0.0, 20.0);
    let v = v_t(&paths, window).unwrap();
    let u = u_t(&paths, spec.theta, window, &KernelOptions::default()).unwrap();
    let est = estimate_oracle(&paths, spec.theta, window, &KernelOptions::default()).unwrap();
    let k0 = paths.grid.index_of(0.0).unwrap();
    let k1 = paths.grid.index_of(20.0).unwrap();
    for r in 0..4 {
        let mut direct = 0.0;
        for k in k0..k1 {
            let res = |k: usize| {
                let x = paths.state(r, k, 0);
                let t = paths.grid.time(k);
                x - (0.5 * x + t.cos())
            };
            direct += 0.5 * 0.05 * (res(k).powi(2) + res(k + 1).powi(2));
        }
        direct /= 20.0;
        assert!((v[r] - direct).abs() < 1e-12 * direct);
        assert_eq!(est[r].v_t, v[r]);
        assert_eq!(est[r].u_t, u[r]);
        assert_eq!(est[r].theta_hat, spec.theta - u[r] / v[r]);
    }
}

/// Deterministic test functions carry no trace term.
#[test]
fn deterministic_test_functions_have_zero_trace() {
    let spec = DriftSpec::<f64>::catalog("example2", 1.0, 1.0).unwrap();
    let paths = simulate_drift(&spec, &TwoSidedSetup::new(h(0.65), 0.05, 5.0, 5), 0..3).unwrap();
    let kernel = malliavin_kernel(&paths, 1.0, (0.0, 5.0), KernelOptions::default()).unwrap();
    let phis: Vec<TestFunction<f64>> = TEST_FUNCTIONS.iter().map(|n| TestFunction::catalog(n, Some(&spec)).unwrap()).collect();
    let res = skorokhod_batch(&phis, &paths, &kernel).unwrap();
    for (phi, rows) in phis.iter().zip(&res) {
        for r in rows {
            if phi.deterministic {
                assert_eq!(r.trace_correction, 0.0, "{}", phi.name);
                assert_eq!(r.skorokhod_value, r.young_integral);
            } else {
                let rebuilt = r.young_integral - r.alpha_h * r.trace_correction;
                assert!((r.skorokhod_value - rebuilt).abs() <= 1e-12 * (1.0 + rebuilt.abs()));
            }
        }
    }
}
