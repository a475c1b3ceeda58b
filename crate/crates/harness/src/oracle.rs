//! Reference values computed independently of the simulation library.

use gauss_quad::GaussLegendre;

const PANELS: usize = 64;
const DEGREE: usize = 20;

/// `½(|s|^{2H} + |t|^{2H} − |t−s|^{2H})`.
pub fn fbm_covariance(s: f64, t: f64, hurst: f64) -> f64 {
    let a = 2.0 * hurst;
    0.5 * (s.abs().powf(a) + t.abs().powf(a) - (t - s).abs().powf(a))
}

fn composite(rule: &GaussLegendre, a: f64, b: f64, panels: usize, f: &dyn Fn(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let w = (b - a) / panels as f64;
    (0..panels).map(|i| rule.integrate(a + i as f64 * w, a + (i + 1) as f64 * w, f)).sum()
}

/// `H(2H−1) ∬_{[a,b]²} h(u) h(v) |u−v|^{2H−2} du dv`.
///
/// With `r = |u − v|` the double integral is `2 ∫_0^L r^{2H−2} g(r) dr`,
/// `g(r) = ∫_a^{b−r} h(u) h(u+r) du`; the substitution `ρ = r^{2H−1}`
/// removes the singularity. `breaks` lists jump points of `h`.
pub fn wiener_second_moment(h: &dyn Fn(f64) -> f64, window: (f64, f64), hurst: f64, breaks: &[f64]) -> f64 {
    let rule = GaussLegendre::new(DEGREE).expect("valid degree");
    let (a, b) = window;
    let len = b - a;
    let p = 2.0 * hurst - 1.0;
    let g = |r: f64| {
        let hi = b - r;
        let mut cuts = vec![a, hi];
        for &c in breaks {
            for x in [c, c - r] {
                if x > a && x < hi {
                    cuts.push(x);
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.windows(2).map(|w| composite(&rule, w[0], w[1], PANELS / 4, &|u| h(u) * h(u + r))).sum::<f64>()
    };
    // g is only piecewise smooth in r: split where a jump meets an end or another jump.
    let mut kinks: Vec<f64> = vec![0.0, len];
    for (i, &c) in breaks.iter().enumerate() {
        kinks.extend([c - a, b - c]);
        kinks.extend(breaks[i + 1..].iter().map(|&d| (d - c).abs()));
    }
    kinks.retain(|&r| (0.0..=len).contains(&r));
    kinks.sort_by(f64::total_cmp);
    kinks.dedup();
    let outer: f64 = kinks
        .windows(2)
        .map(|w| composite(&rule, w[0].powf(p), w[1].powf(p), PANELS, &|rho: f64| g(rho.powf(1.0 / p))))
        .sum();
    hurst * p * 2.0 / p * outer
}

/// Stationary variance of `dX = −ϑX dt + σ dB`, `σ² ϑ^{−2H} H Γ(2H)`.
pub fn fou_stationary_variance(hurst: f64, theta: f64, sigma: f64) -> f64 {
    sigma * sigma * theta.powf(-2.0 * hurst) * hurst * libm::tgamma(2.0 * hurst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_integrand_is_variance() {
        for h in [0.6, 0.7, 0.9] {
            let v = wiener_second_moment(&|_| 1.0, (0.0, 2.0), h, &[]);
            assert!((v - 2f64.powf(2.0 * h)).abs() < 1e-10, "{h} {v}");
        }
    }

    #[test]
    fn indicator_pair_matches_covariance() {
        // h = 1 on [0, 1/2), 0 after: E B(1/2)^2.
        let v = wiener_second_moment(&|u| if u < 0.5 { 1.0 } else { 0.0 }, (0.0, 1.0), 0.75, &[0.5]);
        assert!((v - fbm_covariance(0.5, 0.5, 0.75)).abs() < 1e-8, "{v}");
    }
}
