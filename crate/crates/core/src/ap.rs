//! Almost periodicity: Bohr means and spectra, ε-almost periods, and the
//! square-mean deviation of a solution from its translates.
//!
//! Bohr coefficients follow `c(λ) = M(f(t) e^{iλt})`, so `cos t` has
//! `c(±1) = ½`.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{aligned_steps, TimeGrid};
use crate::scalar::Real;
use crate::sde::{translate_solution, PathEnsemble};
use crate::stats::pairwise_sum;

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Uniformly sampled real or complex signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal<T> {
    pub grid: TimeGrid,
    pub values: Vec<Complex<T>>,
}

impl<T: Real> SampledSignal<T> {
    pub fn real(grid: TimeGrid, values: &[T]) -> Result<Self> {
        Self::complex(grid, values.iter().map(|&v| Complex::new(v, T::zero())).collect())
    }

    pub fn complex(grid: TimeGrid, values: Vec<Complex<T>>) -> Result<Self> {
        if values.len() != grid.n_points {
            return Err(Error::InvalidArgument("signal length does not match its grid".into()));
        }
        if values.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidArgument("signal contains non-finite values".into()));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` on `grid`.
    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let v: Vec<T> = (0..grid.n_points).map(|k| T::lit(f(grid.time(k)))).collect();
        Self::real(grid, &v)
    }

    fn value64(&self, k: usize) -> Complex<f64> {
        let c = self.values[k];
        Complex::new(c.re.to_f64_lossy(), c.im.to_f64_lossy())
    }

    pub fn sup_norm(&self) -> f64 {
        (0..self.values.len()).map(|k| self.value64(k).norm()).fold(0.0, f64::max)
    }
}

/// Trapezoid mean of `g(k)` over `[0, horizon]`; the last partial cell is
/// interpolated linearly.
fn trapezoid_mean(grid: &TimeGrid, horizon: f64, g: impl Fn(usize) -> Complex<f64>) -> Result<Complex<f64>> {
    let i0 = grid.index_of_zero().ok_or(Error::GridMissingZero)?;
    let span = grid.t_end();
    if !(horizon > 0.0) || horizon > span * (1.0 + 1e-12) {
        return Err(Error::HorizonExceedsGrid { horizon, span });
    }
    let dt = grid.dt;
    let full = ((horizon / dt) * (1.0 + 1e-12)).floor() as usize;
    let full = full.min(grid.n_points - 1 - i0);
    let mut terms: Vec<Complex<f64>> = Vec::with_capacity(full + 2);
    for j in 0..full {
        let k = i0 + j;
        terms.push((g(k) + g(k + 1)) * (0.5 * dt));
    }
    let rest = horizon - full as f64 * dt;
    if rest > 1e-12 * dt {
        let k = i0 + full;
        let a = g(k);
        let b = g(k + 1);
        let w = rest / dt;
        let end = a + (b - a) * w;
        terms.push((a + end) * (0.5 * rest));
    }
    let re: Vec<f64> = terms.iter().map(|c| c.re).collect();
    let im: Vec<f64> = terms.iter().map(|c| c.im).collect();
    Ok(Complex::new(pairwise_sum(&re), pairwise_sum(&im)) / horizon)
}

/// `(1/horizon) ∫_0^{horizon} f(s) ds`.
pub fn bohr_mean<T: Real>(f: &SampledSignal<T>, horizon: f64) -> Result<Complex<f64>> {
    trapezoid_mean(&f.grid, horizon, |k| f.value64(k))
}

/// `M(f(t) e^{iλt})` over `[0, horizon]`.
pub fn bohr_coefficient<T: Real>(f: &SampledSignal<T>, lambda: f64, horizon: f64) -> Result<Complex<f64>> {
    let grid = f.grid;
    trapezoid_mean(&grid, horizon, |k| {
        let t = grid.time(k);
        f.value64(k) * Complex::from_polar(1.0, lambda * t)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub frequency: f64,
    pub re: f64,
    pub im: f64,
    pub modulus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub frequencies: Vec<f64>,
    pub coefficients: Vec<Coefficient>,
    /// `M(|f|²)`.
    pub mean_square: f64,
    /// `M(|f|²) − Σ |c|²`.
    pub parseval_defect: f64,
    pub threshold: f64,
    pub horizon: f64,
}

/// Evenly spaced frequency grid.
pub fn frequency_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

/// Scans `lambda_grid` for Bohr frequencies.
///
/// Grid points above the threshold that are local maxima of `|c|` are
/// refined by golden-section search on their neighbouring cells. Weaker
/// candidates within four main-lobe widths (`8π / horizon`) of a stronger
/// one are discarded as leakage.
pub fn spectrum_scan<T: Real>(
    f: &SampledSignal<T>,
    lambda_grid: &[f64],
    amplitude_threshold: Option<f64>,
    horizon: f64,
) -> Result<SpectrumEstimate> {
    let mean_square = trapezoid_mean(&f.grid, horizon, |k| Complex::new(f.value64(k).norm_sqr(), 0.0))?.re;
    let threshold = amplitude_threshold.unwrap_or(0.05 * mean_square.sqrt());
    let moduli: Vec<f64> = lambda_grid
        .par_iter()
        .map(|&l| bohr_coefficient(f, l, horizon).map(|c| c.norm()))
        .collect::<Result<_>>()?;
    let n = lambda_grid.len();
    let mut refined: Vec<Coefficient> = (0..n)
        .into_par_iter()
        .filter(|&i| {
            let c = moduli[i];
            c > threshold && (i == 0 || c >= moduli[i - 1]) && (i + 1 == n || c >= moduli[i + 1])
        })
        .map(|i| {
            let lo = if i == 0 { lambda_grid[0] } else { lambda_grid[i - 1] };
            let hi = if i + 1 == n { lambda_grid[n - 1] } else { lambda_grid[i + 1] };
            let modulus = |l: f64| bohr_coefficient(f, l, horizon).map(|c| c.norm()).unwrap_or(0.0);
            let l = golden_max(modulus, lo, hi, 1e-10);
            let c = bohr_coefficient(f, l, horizon)?;
            Ok(Coefficient { frequency: l, re: c.re, im: c.im, modulus: c.norm() })
        })
        .collect::<Result<_>>()?;
    refined.sort_by(|a, b| b.modulus.total_cmp(&a.modulus));
    let exclusion = 8.0 * std::f64::consts::PI / horizon;
    let mut kept: Vec<Coefficient> = Vec::new();
    for c in refined {
        if c.modulus > threshold && kept.iter().all(|k| (k.frequency - c.frequency).abs() > exclusion) {
            kept.push(c);
        }
    }
    kept.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
    let power: Vec<f64> = kept.iter().map(|c| c.modulus * c.modulus).collect();
    Ok(SpectrumEstimate {
        frequencies: kept.iter().map(|c| c.frequency).collect(),
        parseval_defect: mean_square - pairwise_sum(&power),
        coefficients: kept,
        mean_square,
        threshold,
        horizon,
    })
}

/// Golden-section maximization on `[lo, hi]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct APReport {
    pub epsilon: f64,
    pub candidate_periods: Vec<f64>,
    /// Largest gap between consecutive candidates.
    pub max_gap: f64,
    /// Smallest `ℓ` such that every interval of length `ℓ` inside the scan
    /// range meets a candidate (infinite when there is none).
    pub relatively_dense_at_l: f64,
    pub scan_range: (f64, f64),
}

/// `sup_t |f(t+τ) − f(t)|` over the overlap window, for each τ.
pub fn translation_sup<T: Real>(f: &SampledSignal<T>, tau_grid: &[f64]) -> Result<Vec<f64>> {
    let n = f.grid.n_points;
    tau_grid
        .par_iter()
        .map(|&tau| {
            let s = aligned_steps(tau, f.grid.dt).ok_or(Error::TauOffGrid { tau, dt: f.grid.dt })?;
            let shift = s.unsigned_abs() as usize;
            if shift >= n {
                return Err(Error::EmptyOverlap);
            }
            let sup = (0..n - shift)
                .map(|k| {
                    let (a, b) = if s >= 0 { (k, k + shift) } else { (k + shift, k) };
                    (f.value64(b) - f.value64(a)).norm()
                })
                .fold(0.0, f64::max);
            Ok(sup)
        })
        .collect()
}

/// All `τ` in `tau_grid` that are `ε`-almost periods on the sampled window.
pub fn epsilon_almost_periods<T: Real>(f: &SampledSignal<T>, epsilon: f64, tau_grid: &[f64]) -> Result<APReport> {
    if tau_grid.is_empty() {
        return Err(Error::InvalidArgument("empty shift grid".into()));
    }
    let sups = translation_sup(f, tau_grid)?;
    let mut candidates: Vec<f64> =
        tau_grid.iter().zip(&sups).filter(|(_, &s)| s <= epsilon).map(|(&t, _)| t).collect();
    candidates.sort_by(|a, b| a.total_cmp(b));
    let lo = tau_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = tau_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_gap = candidates.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let relatively_dense_at_l = match (candidates.first(), candidates.last()) {
        (Some(&first), Some(&last)) => max_gap.max(first - lo).max(hi - last),
        _ => f64::INFINITY,
    };
    Ok(APReport { epsilon, candidate_periods: candidates, max_gap, relatively_dense_at_l, scan_range: (lo, hi) })
}

/// Empirical `d₂` distances at a set of probe times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub tau: f64,
    pub probe_times: Vec<f64>,
    /// `sqrt(mean_r |Y_r(t) − X_r(t)|²)` per probe.
    pub per_probe: Vec<f64>,
    pub max: f64,
    pub replicates: usize,
}

impl DeviationReport {
    /// Builds the report from squared distances `[probe][replicate]`.
    pub fn from_squared(tau: f64, probe_times: &[f64], squared: &[Vec<f64>]) -> Self {
        let per_probe: Vec<f64> =
            squared.iter().map(|v| (pairwise_sum(v) / v.len().max(1) as f64).sqrt()).collect();
        let max = per_probe.iter().copied().fold(0.0, f64::max);
        Self {
            tau,
            probe_times: probe_times.to_vec(),
            per_probe,
            max,
            replicates: squared.first().map_or(0, Vec::len),
        }
    }
}

fn squared_distance<T: Real>(a: &[T], b: &[T]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (*x - *y).to_f64_lossy().powi(2)).sum()
}

/// `|𝔗_τX_r(t) − X_r(t)|²` as `[probe][replicate]`.
pub fn theta_squared_distances<T: Real>(
    base: &PathEnsemble<T>,
    tau: f64,
    probe_times: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let shifted = translate_solution(base, tau)?;
    let d = base.dim;
    probe_times
        .iter()
        .map(|&t| {
            let k = base.grid.index_of(t)?;
            Ok((0..base.replicate_count)
                .map(|r| {
                    let x = &base.replicate(r)[k * d..(k + 1) * d];
                    let y = &shifted.replicate(r)[k * d..(k + 1) * d];
                    squared_distance(x, y)
                })
                .collect())
        })
        .collect()
}

/// `|X_r(t+τ) − X_r(t)|²` as `[probe][replicate]`.
pub fn plain_squared_distances<T: Real>(
    base: &PathEnsemble<T>,
    tau: f64,
    probe_times: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let d = base.dim;
    probe_times
        .iter()
        .map(|&t| {
            let k = base.grid.index_of(t)?;
            let k2 = base.grid.index_of(t + tau).map_err(|_| Error::ShiftOutOfRange)?;
            Ok((0..base.replicate_count)
                .map(|r| {
                    let path = base.replicate(r);
                    squared_distance(&path[k * d..(k + 1) * d], &path[k2 * d..(k2 + 1) * d])
                })
                .collect())
        })
        .collect()
}

/// `max_t d₂(𝔗_τX(t), X(t))` over the probe times.
pub fn theta_ap_deviation<T: Real>(base: &PathEnsemble<T>, tau: f64, probe_times: &[f64]) -> Result<DeviationReport> {
    let sq = theta_squared_distances(base, tau, probe_times)?;
    Ok(DeviationReport::from_squared(tau, probe_times, &sq))
}

/// `max_t d₂(X(t+τ), X(t))` on the same sample path (no Wiener shift).
pub fn plain_ap_deviation<T: Real>(base: &PathEnsemble<T>, tau: f64, probe_times: &[f64]) -> Result<DeviationReport> {
    let sq = plain_squared_distances(base, tau, probe_times)?;
    Ok(DeviationReport::from_squared(tau, probe_times, &sq))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_peak() {
        let x = golden_max(|x| -(x - 0.3) * (x - 0.3), 0.0, 1.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-8);
    }

    #[test]
    fn constant_mean() {
        let grid = TimeGrid::covering(0.0, 10.0, 0.1).unwrap();
        let f = SampledSignal::<f64>::from_fn(grid, |_| 2.5).unwrap();
        let m = bohr_mean(&f, 7.33).unwrap();
        assert!((m.re - 2.5).abs() < 1e-12 && m.im.abs() < 1e-12);
    }
}
