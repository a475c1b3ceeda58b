//! Values frozen from 30-digit evaluations of the closed forms.

#![allow(clippy::excessive_precision)]

use apfbm::wiener::{hls_constant, integrand_catalog};
use apfbm::{fbm_covariance, fgn_autocovariance, improper_wiener_second_moment, HurstIndex};

fn h(v: f64) -> HurstIndex {
    HurstIndex::new(v).unwrap()
}

fn close(got: f64, want: f64, rel: f64) {
    assert!((got - want).abs() <= rel * want.abs(), "got {got}, want {want}");
}

#[test]
fn fgn_autocovariance_frozen() {
    let cases = [
        (1u64, 0.75, 0.41421356237309504880),
        (100, 0.7, 0.0176669469843004120910546649779),
        (10_000, 0.7, 0.00111470007844155236697883591881),
        (7, 0.6, 0.0253613781954943475862955752295),
        (8, 0.6, 0.0227786161168661179211831340863),
    ];
    for (k, hv, want) in cases {
        close(fgn_autocovariance(k, h(hv)), want, 1e-12);
    }
    assert_eq!(fgn_autocovariance(0, h(0.7)), 1.0);
}

#[test]
fn fbm_covariance_frozen() {
    close(fbm_covariance(1.0, -1.0, h(0.75)), -0.41421356237309504880, 1e-14);
    close(fbm_covariance(2.0, 2.0, h(0.6)), 2f64.powf(1.2), 1e-15);
    assert_eq!(fbm_covariance(0.0, 3.0, h(0.7)), 0.0);
}

#[test]
fn hls_constant_frozen() {
    let cases = [
        (0.6, 1.080727281419202603),
        (0.7, 1.110381765050740804),
        (0.75, 1.109503169695739585),
        (0.8, 1.099984570351866364),
    ];
    for (hv, want) in cases {
        close(hls_constant(h(hv)), want, 1e-12);
    }
}

/// `E(∫_{−∞}^0 e^u dB_u)² = H Γ(2H)`, the stationary fOU variance.
#[test]
fn improper_exponential_kernel_frozen() {
    let kernel = integrand_catalog("fou_kernel").unwrap();
    let cases = [
        (0.6, 0.550901245439856366),
        (0.7, 0.621084672252152702),
        (0.75, 0.664670194089568510),
        (0.8, 0.714812279430152209),
    ];
    for (hv, want) in cases {
        let m = improper_wiener_second_moment(&kernel, 0.0, h(hv), 64.0).unwrap();
        close(m.value, want, 1e-4);
        assert!(m.relative_error_bound < 1e-4);
    }
}
