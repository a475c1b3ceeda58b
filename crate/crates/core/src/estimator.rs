//! Least-squares drift estimation and ergodic mean values.
//!
//! With `φ = X − b₀(·, X)` the estimator is
//! `ϑ̂_T = −∫_0^T φ δX / ∫_0^T φ² ds = ϑ − U_T / V_T`.

use std::io::Write;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ap::{frequency_grid, spectrum_scan, SampledSignal};
use crate::error::{Error, Result};
use crate::fbm::HurstIndex;
use crate::scalar::Real;
use crate::sde::{simulate_drift, DriftSpec, PathEnsemble, TwoSidedSetup};
use crate::skorokhod::{gamma_table, KernelDynamics, KernelOptions, KernelSupport, ReplicateKernel};
use crate::stats::{iqr, log_log_slope, mean, median, pairwise_sum, standard_error, variance};

/// `V_T` below this is treated as degenerate.
pub const MIN_V_T: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatorMode {
    OracleDecomposition,
    FixedPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub theta_hat: f64,
    pub u_t: f64,
    pub v_t: f64,
    pub horizon_t: f64,
    pub mode: EstimatorMode,
    pub fixed_point_iterations: usize,
    pub converged: bool,
    /// Fixed-point iterates, starting value first.
    pub iterates: Vec<f64>,
}

/// Per-replicate sums along one path over window indices `a..=b`.
struct PathSums {
    /// `φ_k σ_k ΔB_k`.
    young: Vec<f64>,
    /// `c_k S_k`.
    trace: Vec<f64>,
    /// Trapezoid cells of `φ²`.
    cells: Vec<f64>,
}

fn residuals<T: Real>(spec: &DriftSpec<T>, paths: &PathEnsemble<T>, r: usize, a: usize, b: usize) -> Vec<T> {
    let x = paths.replicate(r);
    (a..=b)
        .map(|k| {
            let t = T::lit(paths.grid.time(k) + paths.time_shift);
            x[k] - (spec.b0)(t, x[k])
        })
        .collect()
}

fn trace_terms<T: Real>(
    spec: &DriftSpec<T>,
    paths: &PathEnsemble<T>,
    r: usize,
    theta: f64,
    window: (usize, usize),
    options: &KernelOptions,
    gamma: &[T],
) -> Vec<f64> {
    let (a, b) = window;
    if paths.driving.hurst.is_reference() {
        return vec![0.0; b - a];
    }
    let start = match options.support {
        KernelSupport::FullPath => 0,
        KernelSupport::Window => a,
    };
    let dynamics = KernelDynamics::from_drift(spec, theta);
    let rk = ReplicateKernel::build(&dynamics, options.rule, paths.replicate(r), &paths.grid, paths.time_shift, start, b);
    let sums = rk.derivative_sums(gamma, a, b, options.truncation);
    let x = paths.replicate(r);
    (a..b)
        .map(|k| {
            let t = T::lit(paths.grid.time(k) + paths.time_shift);
            let c = rk.sigma[k - start] * (T::one() - (spec.db0)(t, x[k]));
            (c * sums[k - a]).to_f64_lossy()
        })
        .collect()
}

fn path_sums<T: Real>(
    spec: &DriftSpec<T>,
    paths: &PathEnsemble<T>,
    r: usize,
    theta: f64,
    window: (usize, usize),
    options: &KernelOptions,
    gamma: &[T],
) -> PathSums {
    let (a, b) = window;
    let dt = paths.grid.dt;
    let phi = residuals(spec, paths, r, a, b);
    let noise = paths.noise(r, 0);
    let young = (a..b)
        .map(|k| {
            let t = T::lit(paths.grid.time(k) + paths.time_shift);
            (phi[k - a] * (spec.sigma)(t) * (noise[k + 1] - noise[k])).to_f64_lossy()
        })
        .collect();
    let cells = (0..b - a)
        .map(|i| {
            let (p, q) = (phi[i].to_f64_lossy(), phi[i + 1].to_f64_lossy());
            0.5 * dt * (p * p + q * q)
        })
        .collect();
    PathSums { young, trace: trace_terms(spec, paths, r, theta, window, options, gamma), cells }
}

fn check_scalar<T: Real>(paths: &PathEnsemble<T>) -> Result<&DriftSpec<T>> {
    if paths.dim != 1 {
        return Err(Error::DimensionUnsupported(paths.dim));
    }
    paths.drift_spec()
}

/// `(1/T) ∫_0^T (X − b₀(s, X))² ds` per replicate, trapezoid rule.
pub fn v_t<T: Real>(paths: &PathEnsemble<T>, window: (f64, f64)) -> Result<Vec<f64>> {
    let spec = check_scalar(paths)?;
    let (a, b) = paths.grid.window(window.0, window.1)?;
    let horizon = window.1 - window.0;
    let dt = paths.grid.dt;
    Ok((0..paths.replicate_count)
        .into_par_iter()
        .map(|r| {
            let phi = residuals(spec, paths, r, a, b);
            let cells: Vec<f64> = phi
                .windows(2)
                .map(|w| {
                    let (p, q) = (w[0].to_f64_lossy(), w[1].to_f64_lossy());
                    0.5 * dt * (p * p + q * q)
                })
                .collect();
            pairwise_sum(&cells) / horizon
        })
        .collect())
}

fn decompose<T: Real>(
    paths: &PathEnsemble<T>,
    theta_true: f64,
    window: (f64, f64),
    options: &KernelOptions,
) -> Result<Vec<(f64, f64)>> {
    let spec = check_scalar(paths)?;
    let (a, b) = paths.grid.window(window.0, window.1)?;
    let horizon = window.1 - window.0;
    let gamma = gamma_table::<T>(paths.driving.hurst, paths.grid.dt, b + 16);
    Ok((0..paths.replicate_count)
        .into_par_iter()
        .map(|r| {
            let s = path_sums(spec, paths, r, theta_true, (a, b), options, &gamma);
            let u = (pairwise_sum(&s.young) - pairwise_sum(&s.trace)) / horizon;
            (u, pairwise_sum(&s.cells) / horizon)
        })
        .collect())
}

/// `(1/T) δ((X − b₀) σ 1_{[0,T]})` per replicate, kernel built with `theta_true`.
pub fn u_t<T: Real>(paths: &PathEnsemble<T>, theta_true: f64, window: (f64, f64), options: &KernelOptions) -> Result<Vec<f64>> {
    Ok(decompose(paths, theta_true, window, options)?.into_iter().map(|(u, _)| u).collect())
}

fn oracle_result(theta_true: f64, u: f64, v: f64, horizon: f64) -> Result<EstimatorResult> {
    if !(v >= MIN_V_T) {
        return Err(Error::DegenerateVT(v));
    }
    Ok(EstimatorResult {
        theta_hat: theta_true - u / v,
        u_t: u,
        v_t: v,
        horizon_t: horizon,
        mode: EstimatorMode::OracleDecomposition,
        fixed_point_iterations: 0,
        converged: true,
        iterates: Vec::new(),
    })
}

/// `ϑ − U_T / V_T` per replicate.
pub fn estimate_oracle<T: Real>(
    paths: &PathEnsemble<T>,
    theta_true: f64,
    window: (f64, f64),
    options: &KernelOptions,
) -> Result<Vec<EstimatorResult>> {
    let horizon = window.1 - window.0;
    decompose(paths, theta_true, window, options)?
        .into_iter()
        .map(|(u, v)| oracle_result(theta_true, u, v, horizon))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub kernel: KernelOptions,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self { max_iter: 50, tol: 1e-10, kernel: KernelOptions::default() }
    }
}

/// Data-only estimate: the trace term is evaluated with the current
/// iterate.
///
/// Each step forms `κ = −(Σ φ_k ΔX_k − R(ϑ_n)) / (dt Σ φ_k²)` from left-point
/// sums and trace `R`, then maps the one-step decay rate back to a drift
/// parameter, `ϑ_{n+1} = −ln(1 − κ dt) / dt` (or `κ` itself when
/// `κ dt ≥ 1`). On exact scheme data with `σ ≡ 0` this returns `ϑ`.
/// Without `theta_init` the iteration starts from the same map with the
/// trace dropped.
pub fn estimate_fixed_point<T: Real>(
    paths: &PathEnsemble<T>,
    theta_init: Option<f64>,
    window: (f64, f64),
    options: &FixedPointOptions,
) -> Result<Vec<EstimatorResult>> {
    let spec = check_scalar(paths)?;
    let (a, b) = paths.grid.window(window.0, window.1)?;
    let gamma = gamma_table::<T>(paths.driving.hurst, paths.grid.dt, b + 16);
    (0..paths.replicate_count)
        .into_par_iter()
        .map(|r| fixed_point_replicate(spec, paths, r, theta_init, (a, b), window.1 - window.0, options, &gamma))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn fixed_point_replicate<T: Real>(
    spec: &DriftSpec<T>,
    paths: &PathEnsemble<T>,
    r: usize,
    theta_init: Option<f64>,
    window: (usize, usize),
    horizon: f64,
    options: &FixedPointOptions,
    gamma: &[T],
) -> Result<EstimatorResult> {
    let (a, b) = window;
    let dt = paths.grid.dt;
    let x = paths.replicate(r);
    let phi: Vec<f64> = residuals(spec, paths, r, a, b).iter().map(|v| v.to_f64_lossy()).collect();
    let dx: Vec<f64> = (a..b).map(|k| phi[k - a] * (x[k + 1] - x[k]).to_f64_lossy()).collect();
    let left: Vec<f64> = phi[..b - a].iter().map(|p| p * p).collect();
    let young = pairwise_sum(&dx);
    let denom = dt * pairwise_sum(&left);
    let cells: Vec<f64> = phi.windows(2).map(|w| 0.5 * dt * (w[0] * w[0] + w[1] * w[1])).collect();
    let v = pairwise_sum(&cells) / horizon;
    if !(v >= MIN_V_T) || !(denom > 0.0) {
        return Err(Error::DegenerateVT(v));
    }
    let rate = |trace: f64| {
        let kappa = -(young - trace) / denom;
        if kappa * dt < 1.0 {
            -(1.0 - kappa * dt).ln() / dt
        } else {
            kappa
        }
    };
    let step = |theta: f64| -> (f64, bool) {
        let trace = pairwise_sum(&trace_terms(spec, paths, r, theta, window, &options.kernel, gamma));
        (rate(trace), trace == 0.0)
    };
    let theta_init = theta_init.unwrap_or_else(|| rate(0.0));
    let mut iterates = vec![theta_init];
    let mut theta = theta_init;
    let mut converged = false;
    for _ in 0..options.max_iter {
        let (next, trace_free) = step(theta);
        iterates.push(next);
        let delta = (next - theta).abs();
        theta = next;
        if trace_free || delta < options.tol {
            converged = theta.is_finite();
            break;
        }
    }
    let theta_hat = theta;
    Ok(EstimatorResult {
        theta_hat,
        u_t: (spec.theta - theta_hat) * v,
        v_t: v,
        horizon_t: horizon,
        mode: EstimatorMode::FixedPoint,
        fixed_point_iterations: iterates.len() - 1,
        converged,
        iterates,
    })
}

/// `U_T` and `V_T` at every horizon of `ladder`, from nested windows
/// `[0, T_i]` of one path per replicate. Output is `[horizon][replicate]`.
pub fn ladder_decomposition<T: Real>(
    paths: &PathEnsemble<T>,
    theta_true: f64,
    ladder: &[f64],
    options: &KernelOptions,
) -> Result<Vec<Vec<(f64, f64)>>> {
    let spec = check_scalar(paths)?;
    validate_ladder(ladder)?;
    let top = *ladder.last().unwrap();
    let (a, b) = paths.grid.window(0.0, top)?;
    let cuts: Vec<usize> = ladder.iter().map(|&t| paths.grid.window(0.0, t).map(|w| w.1 - a)).collect::<Result<_>>()?;
    let gamma = gamma_table::<T>(paths.driving.hurst, paths.grid.dt, b + 16);
    let per_rep: Vec<Vec<(f64, f64)>> = (0..paths.replicate_count)
        .into_par_iter()
        .map(|r| {
            let s = path_sums(spec, paths, r, theta_true, (a, b), options, &gamma);
            cuts.iter()
                .zip(ladder)
                .map(|(&n, &t)| {
                    let u = (pairwise_sum(&s.young[..n]) - pairwise_sum(&s.trace[..n])) / t;
                    (u, pairwise_sum(&s.cells[..n]) / t)
                })
                .collect()
        })
        .collect();
    Ok((0..ladder.len()).map(|h| per_rep.iter().map(|v| v[h]).collect()).collect())
}

fn validate_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.is_empty() || ladder[0] <= 0.0 || ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("horizons must be positive and strictly increasing".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSummary {
    pub horizon: f64,
    pub theta_median: f64,
    pub theta_q25: f64,
    pub theta_q75: f64,
    pub theta_iqr: f64,
    pub median_abs_error: f64,
    pub mean_u2: f64,
    pub se_u2: f64,
    pub mean_u: f64,
    pub se_u: f64,
    pub mean_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencySeries {
    pub drift: String,
    pub hurst: f64,
    pub theta: f64,
    pub replicates: usize,
    pub horizons: Vec<f64>,
    pub summaries: Vec<HorizonSummary>,
    /// Least-squares slope of `log mean U_T²` against `log T`.
    pub slope_u2: f64,
    pub reference_slope: f64,
}

impl ConsistencySeries {
    /// `samples[h][r] = (U, V)`.
    pub fn from_samples(drift: &str, hurst: HurstIndex, theta: f64, horizons: &[f64], samples: &[Vec<(f64, f64)>]) -> Result<Self> {
        validate_ladder(horizons)?;
        let replicates = samples.first().map_or(0, Vec::len);
        if samples.len() != horizons.len() || samples.iter().any(|s| s.len() != replicates) || replicates < 2 {
            return Err(Error::InvalidArgument("every horizon needs the same replicate set".into()));
        }
        let summaries: Vec<HorizonSummary> = horizons
            .iter()
            .zip(samples)
            .map(|(&t, s)| {
                let theta_hat: Vec<f64> = s.iter().map(|&(u, v)| theta - u / v).collect();
                let err: Vec<f64> = theta_hat.iter().map(|x| (x - theta).abs()).collect();
                let u: Vec<f64> = s.iter().map(|p| p.0).collect();
                let u2: Vec<f64> = u.iter().map(|x| x * x).collect();
                let v: Vec<f64> = s.iter().map(|p| p.1).collect();
                HorizonSummary {
                    horizon: t,
                    theta_median: median(&theta_hat),
                    theta_q25: crate::stats::quantile(&theta_hat, 0.25),
                    theta_q75: crate::stats::quantile(&theta_hat, 0.75),
                    theta_iqr: iqr(&theta_hat),
                    median_abs_error: median(&err),
                    mean_u2: mean(&u2),
                    se_u2: standard_error(&u2),
                    mean_u: mean(&u),
                    se_u: standard_error(&u),
                    mean_v: mean(&v),
                }
            })
            .collect();
        let m: Vec<f64> = summaries.iter().map(|s| s.mean_u2).collect();
        Ok(Self {
            drift: drift.to_string(),
            hurst: hurst.value(),
            theta,
            replicates,
            horizons: horizons.to_vec(),
            slope_u2: if horizons.len() > 1 { log_log_slope(horizons, &m) } else { f64::NAN },
            reference_slope: 2.0 * hurst.value() - 2.0,
            summaries,
        })
    }

    pub fn slope_within(&self, tolerance: f64) -> bool {
        (self.slope_u2 - self.reference_slope).abs() <= tolerance
    }

    /// Median absolute error strictly decreasing over the horizons.
    pub fn strictly_decreasing(&self) -> bool {
        self.summaries.windows(2).all(|w| w[1].median_abs_error < w[0].median_abs_error)
    }

    /// CSV with one row per horizon.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "horizon,theta_median,theta_q25,theta_q75,theta_iqr,median_abs_error,mean_u2,se_u2,mean_u,se_u,mean_v")?;
        for s in &self.summaries {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                s.horizon,
                s.theta_median,
                s.theta_q25,
                s.theta_q75,
                s.theta_iqr,
                s.median_abs_error,
                s.mean_u2,
                s.se_u2,
                s.mean_u,
                s.se_u,
                s.mean_v
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub replicates: usize,
    /// Replicates simulated together; bounds peak memory.
    pub chunk: usize,
    /// Leading replicates that also run the fixed-point estimator.
    pub fixed_point_replicates: usize,
    pub fixed_point: FixedPointOptions,
    pub kernel: KernelOptions,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            replicates: 500,
            chunk: 50,
            fixed_point_replicates: 100,
            fixed_point: FixedPointOptions::default(),
            kernel: KernelOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRun {
    pub series: ConsistencySeries,
    /// `[horizon][replicate] = (U, V)`.
    pub samples: Vec<Vec<(f64, f64)>>,
    /// Fixed-point estimates at the top horizon, matched to the first
    /// replicates of `samples`.
    pub fixed_point: Vec<EstimatorResult>,
}

impl ConsistencyRun {
    /// Oracle estimates at horizon index `h`.
    pub fn oracle_estimates(&self, h: usize) -> Vec<f64> {
        self.samples[h].iter().map(|&(u, v)| self.series.theta - u / v).collect()
    }

    /// `median |ϑ̂_FP − ϑ̂_oracle|` on matched replicates at the top horizon.
    pub fn mode_gap(&self) -> f64 {
        let top = self.oracle_estimates(self.samples.len() - 1);
        let gaps: Vec<f64> = self.fixed_point.iter().zip(&top).map(|(f, o)| (f.theta_hat - o).abs()).collect();
        if gaps.is_empty() {
            f64::NAN
        } else {
            median(&gaps)
        }
    }

    /// Per-replicate CSV `horizon,replicate,u,v,theta_hat`.
    pub fn write_samples_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "horizon,replicate,u,v,theta_hat")?;
        for (h, s) in self.samples.iter().enumerate() {
            for (r, &(u, v)) in s.iter().enumerate() {
                writeln!(w, "{},{},{},{},{}", self.series.horizons[h], r, u, v, self.series.theta - u / v)?;
            }
        }
        Ok(())
    }
}

/// Monte Carlo consistency experiment over a horizon ladder.
///
/// Each replicate is one two-sided path on `[−T₀, T_max]`; replicates are
/// simulated in chunks and only the ladder statistics are kept.
pub fn consistency_experiment<T: Real>(
    spec: &DriftSpec<T>,
    setup: &TwoSidedSetup,
    ladder: &[f64],
    plan: &ExperimentPlan,
) -> Result<ConsistencyRun> {
    validate_ladder(ladder)?;
    let top = *ladder.last().unwrap();
    let setup = TwoSidedSetup { horizon: top, ..*setup };
    let mut samples: Vec<Vec<(f64, f64)>> = vec![Vec::with_capacity(plan.replicates); ladder.len()];
    let mut fixed_point = Vec::new();
    let chunk = plan.chunk.max(1);
    let mut start = 0;
    while start < plan.replicates {
        let ids: Range<u64> = start as u64..(start + chunk).min(plan.replicates) as u64;
        let paths = simulate_drift(spec, &setup, ids.clone())?;
        for (h, part) in ladder_decomposition(&paths, spec.theta, ladder, &plan.kernel)?.into_iter().enumerate() {
            samples[h].extend(part);
        }
        if start < plan.fixed_point_replicates {
            let keep = (plan.fixed_point_replicates - start).min(paths.replicate_count);
            let sub = truncate_replicates(paths.clone(), keep);
            fixed_point.extend(estimate_fixed_point(&sub, None, (0.0, top), &plan.fixed_point)?);
        }
        start += chunk;
    }
    for s in &samples {
        for &(_, v) in s {
            if !(v >= MIN_V_T) {
                return Err(Error::DegenerateVT(v));
            }
        }
    }
    let series = ConsistencySeries::from_samples(spec.kind.name(), setup.hurst, spec.theta, ladder, &samples)?;
    Ok(ConsistencyRun { series, samples, fixed_point })
}

pub fn truncate_replicates<T: Real>(mut paths: PathEnsemble<T>, keep: usize) -> PathEnsemble<T> {
    paths.states.truncate(keep * paths.grid.n_points * paths.dim);
    paths.replicate_count = keep;
    paths
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirkhoffSeries {
    pub horizons: Vec<f64>,
    /// `[horizon][replicate]`.
    pub per_replicate: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub standard_error: Vec<f64>,
}

/// `(1/t) ∫_0^t Y(s, X(s)) ds` per replicate at each horizon `t`, trapezoid
/// rule on the path grid. Horizons must be grid-aligned.
pub fn birkhoff_average<T: Real>(
    paths: &PathEnsemble<T>,
    y: impl Fn(f64, &[T]) -> f64 + Sync,
    horizons: &[f64],
) -> Result<BirkhoffSeries> {
    validate_ladder(horizons)?;
    let top = *horizons.last().unwrap();
    let (a, _) = paths.grid.window(0.0, top)?;
    let cuts: Vec<usize> = horizons.iter().map(|&t| paths.grid.window(0.0, t).map(|w| w.1 - a)).collect::<Result<_>>()?;
    let n = *cuts.last().unwrap();
    let dt = paths.grid.dt;
    let d = paths.dim;
    let per_rep: Vec<Vec<f64>> = (0..paths.replicate_count)
        .into_par_iter()
        .map(|r| {
            let x = paths.replicate(r);
            let vals: Vec<f64> =
                (a..=a + n).map(|k| y(paths.grid.time(k) + paths.time_shift, &x[k * d..(k + 1) * d])).collect();
            let cells: Vec<f64> = vals.windows(2).map(|w| 0.5 * dt * (w[0] + w[1])).collect();
            cuts.iter().zip(horizons).map(|(&c, &t)| pairwise_sum(&cells[..c]) / t).collect()
        })
        .collect();
    let per_replicate: Vec<Vec<f64>> = (0..horizons.len()).map(|h| per_rep.iter().map(|v| v[h]).collect()).collect();
    Ok(BirkhoffSeries {
        horizons: horizons.to_vec(),
        mean: per_replicate.iter().map(|v| mean(v)).collect(),
        variance: per_replicate.iter().map(|v| variance(v)).collect(),
        standard_error: per_replicate.iter().map(|v| standard_error(v)).collect(),
        per_replicate,
    })
}

/// `(1/τ) ∫_0^τ E Y(s) ds` estimated by the ensemble mean, trapezoid rule.
pub fn period_average<T: Real>(paths: &PathEnsemble<T>, y: impl Fn(f64, &[T]) -> f64 + Sync, period: f64) -> Result<f64> {
    let s = birkhoff_average(paths, y, &[period])?;
    Ok(s.mean[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanValueReport {
    pub horizons: Vec<f64>,
    pub ensemble_means: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// Value at the longest horizon.
    pub estimate: f64,
    /// `|m_last − m_prev| / |m_last|` for the two longest horizons.
    pub relative_change: f64,
    /// `Σ |M(m̂_Y e^{iλ·})|²` over the detected spectrum of the mean function.
    pub parseval_positivity: f64,
    pub spectrum_frequencies: Vec<f64>,
}

impl MeanValueReport {
    /// Estimate exceeds `k` standard errors at the longest horizon.
    pub fn bounded_away_from_zero(&self, k: f64) -> bool {
        let se = *self.standard_errors.last().unwrap_or(&f64::INFINITY);
        self.estimate > k * se && self.parseval_positivity > 0.0
    }
}

/// Mean value `M(m_Y)` of `m_Y(t) = E Y(t)` as the long-horizon limit of
/// ensemble-mean Birkhoff averages. The positivity diagnostic scans the
/// ensemble mean function for frequencies in `[−band, band]`.
pub fn mean_value_ap<T: Real>(
    paths: &PathEnsemble<T>,
    y: impl Fn(f64, &[T]) -> f64 + Sync,
    horizons: &[f64],
    band: f64,
) -> Result<MeanValueReport> {
    let series = birkhoff_average(paths, &y, horizons)?;
    let top = *horizons.last().unwrap();
    let (a, b) = paths.grid.window(0.0, top)?;
    let d = paths.dim;
    let m: Vec<f64> = (a..=b)
        .into_par_iter()
        .map(|k| {
            let v: Vec<f64> = (0..paths.replicate_count)
                .map(|r| y(paths.grid.time(k) + paths.time_shift, &paths.replicate(r)[k * d..(k + 1) * d]))
                .collect();
            pairwise_sum(&v) / v.len() as f64
        })
        .collect();
    let signal = SampledSignal::real(paths.grid.slice(a, b), &m)?;
    let step = std::f64::consts::PI / (4.0 * top);
    let spectrum = spectrum_scan(&signal, &frequency_grid(-band, band, step), None, top)?;
    let power: Vec<f64> = spectrum.coefficients.iter().map(|c| c.modulus * c.modulus).collect();
    let n = series.mean.len();
    let estimate = series.mean[n - 1];
    Ok(MeanValueReport {
        horizons: horizons.to_vec(),
        relative_change: if n > 1 { (estimate - series.mean[n - 2]).abs() / estimate.abs() } else { f64::NAN },
        ensemble_means: series.mean,
        standard_errors: series.standard_error,
        estimate,
        parseval_positivity: pairwise_sum(&power),
        spectrum_frequencies: spectrum.frequencies,
    })
}

/// `(x − b₀(t, x))²`.
pub fn squared_residual<T: Real>(spec: &DriftSpec<T>) -> impl Fn(f64, &[T]) -> f64 + Sync + '_ {
    move |t, x| {
        let r = (x[0] - (spec.b0)(T::lit(t), x[0])).to_f64_lossy();
        r * r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_validation() {
        assert!(validate_ladder(&[1.0, 2.0]).is_ok());
        assert!(validate_ladder(&[2.0, 2.0]).is_err());
        assert!(validate_ladder(&[]).is_err());
    }
}
