//! Wiener integrals of deterministic integrands against fBm.
//!
//! Double integrals against `|u − v|^{2H−2}` use exact cell weights: over two
//! cells of width `Δ` at lag `l` the kernel integrates (times `H(2H−1)`) to
//! `γ(l) Δ^{2H}`, with `γ` the fGn autocovariance, and the integrand is taken
//! at cell midpoints.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::{fgn_autocovariance, FbmEnsemble, HurstIndex};
use crate::scalar::Real;
use crate::stats::{mean, pairwise_sum, standard_error};

/// Relative truncation target for integrals over `]−∞, t]`.
pub const IMPROPER_TOLERANCE: f64 = 1e-6;

type Evaluator = Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>;

/// Deterministic `d × d` (scalar when `d = 1`) integrand.
#[derive(Clone)]
pub struct DeterministicIntegrand {
    dim: usize,
    evaluator: Evaluator,
    pub description: String,
    /// Exponential rate `m` with `‖h(t)‖ ≤ C e^{m t}` for `t ≤ 0`.
    pub decay_hint: Option<f64>,
}

impl fmt::Debug for DeterministicIntegrand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DeterministicIntegrand")
            .field("dim", &self.dim)
            .field("description", &self.description)
            .field("decay_hint", &self.decay_hint)
            .finish()
    }
}

impl DeterministicIntegrand {
    pub fn scalar<F>(description: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            dim: 1,
            evaluator: Arc::new(move |t, out| out[0] = f(t)),
            description: description.into(),
            decay_hint: None,
        }
    }

    /// Matrix-valued integrand; `f` fills a row-major `d × d` buffer.
    pub fn matrix<F>(description: impl Into<String>, dim: usize, f: F) -> Self
    where
        F: Fn(f64, &mut [f64]) + Send + Sync + 'static,
    {
        Self { dim, evaluator: Arc::new(f), description: description.into(), decay_hint: None }
    }

    /// Declares exponential decay at rate `m` towards `−∞`, checked on a
    /// probe grid over `[−50/m, 0]`.
    pub fn with_decay(mut self, m: f64) -> Result<Self> {
        if !(m > 0.0) {
            return Err(Error::InvalidArgument(format!("decay rate must be positive, got {m}")));
        }
        self.decay_hint = Some(m);
        self.decay_constant()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        (self.evaluator)(t, out)
    }

    /// Scalar value (first entry for matrix integrands).
    pub fn eval(&self, t: f64) -> f64 {
        let mut buf = vec![0.0; self.dim * self.dim];
        self.eval_into(t, &mut buf);
        buf[0]
    }

    /// Operator norm of `h(t)`.
    pub fn op_norm(&self, t: f64) -> f64 {
        let mut buf = vec![0.0; self.dim * self.dim];
        self.eval_into(t, &mut buf);
        op_norm(&buf, self.dim)
    }

    /// Envelope constant `C` of the decay hint, estimated on the probe grid.
    pub fn decay_constant(&self) -> Result<f64> {
        let m = self.decay_hint.ok_or(Error::NoDecayHint)?;
        let reach = 50.0 / m;
        let probes = 2001;
        let mut left: f64 = 0.0;
        let mut right: f64 = 0.0;
        for i in 0..probes {
            let t = -reach * (1.0 - i as f64 / (probes - 1) as f64);
            let env = self.op_norm(t) * (-m * t).exp();
            if !env.is_finite() {
                return Err(Error::DecayHintViolated { t });
            }
            if t < -reach / 2.0 {
                left = left.max(env);
            } else {
                right = right.max(env);
            }
        }
        if left > right * (1.0 + 1e-9) + 1e-300 {
            return Err(Error::DecayHintViolated { t: -reach });
        }
        Ok(right)
    }
}

fn op_norm(m: &[f64], d: usize) -> f64 {
    if d == 1 {
        return m[0].abs();
    }
    let mat = DMatrix::from_row_slice(d, d, m);
    mat.singular_values().max()
}

/// Named integrands used by the command line and the acceptance suites.
pub fn integrand_catalog(name: &str) -> Option<DeterministicIntegrand> {
    use std::f64::consts::PI;
    let h = match name {
        "zero" => DeterministicIntegrand::scalar("h = 0", |_| 0.0),
        "one" => DeterministicIntegrand::scalar("h = 1", |_| 1.0),
        "linear" => DeterministicIntegrand::scalar("h(u) = u", |u| u),
        "exp_decay" => DeterministicIntegrand::scalar("h(u) = exp(-u)", |u| (-u).exp()),
        "sign_step" => DeterministicIntegrand::scalar("h = 1 on [0,1/2], -1 after", |u| {
            if u <= 0.5 {
                1.0
            } else {
                -1.0
            }
        }),
        "cosine" => DeterministicIntegrand::scalar("h(u) = cos(2 pi u)", |u| (2.0 * PI * u).cos()),
        "sine" => DeterministicIntegrand::scalar("h(u) = sin(3u)", |u| (3.0 * u).sin()),
        "quadratic" => DeterministicIntegrand::scalar("h(u) = u^2 - u + 1", |u| u * u - u + 1.0),
        "sqrt" => DeterministicIntegrand::scalar("h(u) = sqrt|u|", |u| u.abs().sqrt()),
        "gauss" => DeterministicIntegrand::scalar("h(u) = exp(-10 (u - 1/2)^2)", |u| {
            (-10.0 * (u - 0.5) * (u - 0.5)).exp()
        }),
        "peak" => DeterministicIntegrand::scalar("h(u) = 1 / (1 + 25 (u - 1/2)^2)", |u| {
            1.0 / (1.0 + 25.0 * (u - 0.5) * (u - 0.5))
        }),
        "fou_kernel" => DeterministicIntegrand::scalar("h(u) = exp(u)", f64::exp).with_decay(1.0).ok()?,
        _ => return None,
    };
    Some(h)
}

pub const CATALOG_NAMES: &[&str] = &[
    "zero", "one", "linear", "exp_decay", "sign_step", "cosine", "sine", "quadratic", "sqrt", "gauss",
    "peak", "fou_kernel",
];

/// Resolution of the exact-cell quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    /// Cells per unit length.
    pub cells_per_unit: f64,
    pub min_cells: usize,
    pub max_cells: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self { cells_per_unit: 2000.0, min_cells: 4000, max_cells: 20000 }
    }
}

impl Quadrature {
    fn cells(&self, length: f64) -> usize {
        ((length * self.cells_per_unit).ceil() as usize).clamp(self.min_cells, self.max_cells)
    }
}

/// `Σ_{j,k} ⟨f_j, f_k⟩ γ(|j−k|) Δ^{2H}` for row-major `d × d` samples.
pub fn toeplitz_form(samples: &[f64], d2: usize, cell: f64, h: HurstIndex) -> f64 {
    let n = samples.len() / d2;
    let lags: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|l| {
            let g = fgn_autocovariance(l as u64, h);
            if g == 0.0 {
                return 0.0;
            }
            let mut acc = 0.0;
            for j in 0..n - l {
                let a = &samples[j * d2..(j + 1) * d2];
                let b = &samples[(j + l) * d2..(j + l + 1) * d2];
                acc += a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            }
            let w = if l == 0 { 1.0 } else { 2.0 };
            w * g * acc
        })
        .collect();
    pairwise_sum(&lags) * cell.powf(2.0 * h.value())
}

fn midpoint_samples(
    h: &DeterministicIntegrand,
    s: f64,
    t: f64,
    cells: usize,
    norm: bool,
) -> Result<(Vec<f64>, usize, f64)> {
    let d2 = if norm { 1 } else { h.dim * h.dim };
    let cell = (t - s) / cells as f64;
    let mut out = vec![0.0; cells * d2];
    let mut buf = vec![0.0; h.dim * h.dim];
    for j in 0..cells {
        let u = s + (j as f64 + 0.5) * cell;
        h.eval_into(u, &mut buf);
        if buf.iter().any(|v| !v.is_finite()) {
            return Err(Error::QuadratureDiverged { t: u });
        }
        if norm {
            out[j] = op_norm(&buf, h.dim);
        } else {
            out[j * d2..(j + 1) * d2].copy_from_slice(&buf);
        }
    }
    Ok((out, d2, cell))
}

fn check_window(s: f64, t: f64) -> Result<()> {
    if !(s < t) || !s.is_finite() || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("window [{s}, {t}] must satisfy s < t")));
    }
    Ok(())
}

/// `H(2H−1) ∬ |u−v|^{2H−2} ‖h(u)‖ ‖h(v)‖ du dv` over `[s, t]²`.
pub fn hnorm(h: &DeterministicIntegrand, window: (f64, f64), hurst: HurstIndex, quad: &Quadrature) -> Result<f64> {
    let (s, t) = window;
    check_window(s, t)?;
    let (samples, d2, cell) = midpoint_samples(h, s, t, quad.cells(t - s), true)?;
    Ok(toeplitz_form(&samples, d2, cell, hurst))
}

/// Exact variance `H(2H−1) ∬ ⟨h(u), h(v)⟩ |u−v|^{2H−2} du dv` of the
/// Wiener integral over `[s, t]`.
pub fn wiener_second_moment(
    h: &DeterministicIntegrand,
    window: (f64, f64),
    hurst: HurstIndex,
    quad: &Quadrature,
) -> Result<f64> {
    let (s, t) = window;
    check_window(s, t)?;
    let (samples, d2, cell) = midpoint_samples(h, s, t, quad.cells(t - s), false)?;
    Ok(toeplitz_form(&samples, d2, cell, hurst))
}

/// `c (∫_s^t ‖h(u)‖^{1/H} du)^{2H}`.
pub fn memin_bound(
    h: &DeterministicIntegrand,
    window: (f64, f64),
    hurst: HurstIndex,
    c_dh: f64,
    quad: &Quadrature,
) -> Result<f64> {
    let (s, t) = window;
    check_window(s, t)?;
    let (samples, _, cell) = midpoint_samples(h, s, t, quad.cells(t - s), true)?;
    let p = 1.0 / hurst.value();
    let powered: Vec<f64> = samples.iter().map(|v| v.powf(p)).collect();
    Ok(c_dh * (pairwise_sum(&powered) * cell).powf(2.0 * hurst.value()))
}

/// Sharp constant of the one-dimensional Hardy–Littlewood–Sobolev
/// inequality in the form `‖h‖²_{|ℋ|} ≤ c ‖h‖²_{L^{1/H}}`.
pub fn hls_constant(hurst: HurstIndex) -> f64 {
    let h = hurst.value();
    let pi = std::f64::consts::PI;
    hurst.alpha() * pi.powf(1.5 - 2.0 * h) * libm::tgamma(h - 0.5) / libm::tgamma(h)
}

/// Result of [`improper_wiener_second_moment`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImproperMoment {
    pub value: f64,
    /// Truncation depth `T₀`: the integral runs over `[t − T₀, t]`.
    pub truncation: f64,
    /// Certified bound on the relative truncation error.
    pub relative_error_bound: f64,
}

/// Second moment of `∫_{−∞}^t h dB` by truncation at `t − T₀`.
///
/// With `|h(u)| ≤ C e^{m u}`, the neglected block over `]−∞, a]²` is at most
/// `C² e^{2ma} H Γ(2H) m^{−2H} ≤ C² e^{2ma} m^{−2H}`, and the cross term is
/// controlled by Cauchy–Schwarz. `T₀` grows until the relative bound is below
/// [`IMPROPER_TOLERANCE`].
pub fn improper_wiener_second_moment(
    h: &DeterministicIntegrand,
    t: f64,
    hurst: HurstIndex,
    cells_per_decay: f64,
) -> Result<ImproperMoment> {
    let m = h.decay_hint.ok_or(Error::NoDecayHint)?;
    let c = h.decay_constant()?;
    let tail = |a: f64| c * c * (2.0 * m * a).exp() * m.powf(-2.0 * hurst.value());
    let mut depth = (10.0 / m).max(t.max(0.0) + 1.0 / m);
    loop {
        let a = t - depth;
        let length = depth;
        let cells = ((length * m * cells_per_decay).ceil() as usize).max(16);
        let (samples, d2, cell) = midpoint_samples(h, a, t, cells, false)?;
        let value = toeplitz_form(&samples, d2, cell, hurst);
        let rest = tail(a);
        if value == 0.0 && rest == 0.0 {
            return Ok(ImproperMoment { value, truncation: depth, relative_error_bound: 0.0 });
        }
        let ratio = rest / value.abs().max(1e-300);
        let bound = 2.0 * ratio.sqrt() + ratio;
        if bound < IMPROPER_TOLERANCE {
            return Ok(ImproperMoment { value, truncation: depth, relative_error_bound: bound });
        }
        if depth > 1e4 / m {
            return Err(Error::QuadratureDiverged { t: a });
        }
        depth += 5.0 / m;
    }
}

/// Left-point Riemann sum `Σ y(t_k)(w(t_{k+1}) − w(t_k))` over indices `a..b`.
pub fn riemann_sum<T: Real>(y: &[T], w: &[T], window: (usize, usize)) -> Result<T> {
    let (a, b) = window;
    if a > b || b >= w.len() || b > y.len() {
        return Err(Error::WindowOffGrid { start: a as f64, end: b as f64 });
    }
    let terms: Vec<T> = (a..b).map(|k| y[k] * (w[k + 1] - w[k])).collect();
    Ok(pairwise_sum(&terms))
}

/// Vector Riemann sum for matrix samples `y` (row-major `d × d` per point)
/// against the `d` components of `w`.
pub fn riemann_sum_matrix<T: Real>(y: &[T], w: &[&[T]], window: (usize, usize)) -> Result<Vec<T>> {
    let d = w.len();
    let (a, b) = window;
    if d == 0 || a > b || w.iter().any(|c| b >= c.len()) || y.len() < b * d * d {
        return Err(Error::WindowOffGrid { start: a as f64, end: b as f64 });
    }
    let mut out = vec![T::zero(); d];
    for (i, o) in out.iter_mut().enumerate() {
        let terms: Vec<T> = (a..b)
            .flat_map(|k| (0..d).map(move |j| (k, j)))
            .map(|(k, j)| y[k * d * d + i * d + j] * (w[j][k + 1] - w[j][k]))
            .collect();
        *o = pairwise_sum(&terms);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsometryReport {
    pub empirical_second_moment: f64,
    pub analytic_second_moment: f64,
    pub mc_standard_error: f64,
    pub z_score: f64,
    pub replicates: usize,
}

/// Monte Carlo check of the isometry on a grid-aligned window.
pub fn wiener_integral_mc<T: Real>(
    h: &DeterministicIntegrand,
    ensemble: &FbmEnsemble<T>,
    window: (f64, f64),
    quad: &Quadrature,
) -> Result<IsometryReport> {
    if h.dim != ensemble.dim {
        return Err(Error::InvalidArgument("integrand and ensemble dimensions differ".into()));
    }
    let grid = ensemble.grid;
    let (a, b) = grid.window(window.0, window.1)?;
    let d = h.dim;
    let mut samples = vec![T::zero(); (b + 1) * d * d];
    let mut buf = vec![0.0; d * d];
    for k in a..=b {
        h.eval_into(grid.time(k), &mut buf);
        for (i, v) in buf.iter().enumerate() {
            samples[k * d * d + i] = T::lit(*v);
        }
    }
    let squares: Vec<f64> = (0..ensemble.replicate_count)
        .into_par_iter()
        .map(|r| {
            let comps: Vec<&[T]> = (0..d).map(|j| ensemble.path(r, j)).collect();
            let j = riemann_sum_matrix(&samples, &comps, (a, b)).expect("window checked");
            j.iter().map(|v| v.to_f64_lossy().powi(2)).sum::<f64>()
        })
        .collect();
    let analytic = wiener_second_moment(h, window, ensemble.hurst, quad)?;
    let empirical = mean(&squares);
    let se = standard_error(&squares);
    let z = if se > 0.0 {
        (empirical - analytic) / se
    } else if empirical == analytic {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(IsometryReport {
        empirical_second_moment: empirical,
        analytic_second_moment: analytic,
        mc_standard_error: se,
        z_score: z,
        replicates: squares.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(v: f64) -> HurstIndex {
        HurstIndex::new(v).unwrap()
    }

    #[test]
    fn constant_integrand_closed_form() {
        let one = integrand_catalog("one").unwrap();
        for t in [1.0, 2.5] {
            let v = wiener_second_moment(&one, (0.0, t), h(0.7), &Quadrature::default()).unwrap();
            assert!((v - t.powf(1.4)).abs() < 1e-12 * t.powf(1.4));
        }
    }

    #[test]
    fn riemann_hand_value() {
        let y = [0.0, 0.25, 0.5, 0.75, 1.0];
        let w = y;
        assert!((riemann_sum(&y, &w, (0, 4)).unwrap() - 0.375f64).abs() < 1e-15);
    }

    #[test]
    fn decay_hint_rejects_growth() {
        let bad = DeterministicIntegrand::scalar("e^{-u}", |u| (-u).exp());
        assert!(matches!(bad.with_decay(1.0), Err(Error::DecayHintViolated { .. })));
    }

    #[test]
    fn hls_constant_value() {
        let c = hls_constant(h(0.7));
        assert!((c - 1.110_381_765_050_740_8).abs() < 1e-12);
    }
}
