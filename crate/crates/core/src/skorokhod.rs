//! Skorokhod integrals of `φ(t, X(t)) σ(t)` against fBm.
//!
//! `δ(u) = Σ u_k ΔB_k − Σ_k c_k Σ_{j<k} E[ΔB_j ΔB_k] ∂X_k/∂ΔB_j` with
//! `c_k = σ_k ∂₂φ(t_k, X_k)`. Under the `Scheme` rule the derivative is the
//! chain rule of the exponential Euler recursion,
//! `∂X_k/∂ΔB_j = σ_j Π_{m=j+1}^{k−1} ρ_m`, which makes the discrete divergence
//! mean-zero exactly. The `Trapezoid` rule instead uses
//! `D_sX(t) = σ(s) exp(−∫_s^t ϑ(1 − ∂₂b₀(u, X(u))) du)` with the trapezoid
//! rule along the path.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::{fgn_autocovariance, HurstIndex};
use crate::grid::TimeGrid;
use crate::scalar::Real;
use crate::sde::{DriftSpec, PathEnsemble, ScalarField, TimeFn};
use crate::stats::pairwise_sum;

/// Default cut-off on the running derivative product in the trace sum.
pub const DEFAULT_TRUNCATION: f64 = 1e-12;

const BLOCK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DerivativeRule {
    /// Chain rule of the discrete scheme.
    Scheme,
    /// Exponential formula with trapezoid inner integral.
    Trapezoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelSupport {
    /// Derivatives with respect to the whole simulated noise, burn-in included.
    FullPath,
    /// Derivatives with respect to the noise on the integration window only.
    Window,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelOptions {
    pub rule: DerivativeRule,
    pub support: KernelSupport,
    /// Trace terms stop once the derivative product falls below this value.
    pub truncation: f64,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self { rule: DerivativeRule::Scheme, support: KernelSupport::FullPath, truncation: DEFAULT_TRUNCATION }
    }
}

/// Linearized scalar dynamics `dX = (aX + b(t, X)) dt + σ(t) dB`.
#[derive(Clone)]
pub struct KernelDynamics<T> {
    pub a: f64,
    /// `∂ₓb`.
    pub db: ScalarField<T>,
    pub sigma: TimeFn<T>,
}

impl<T: Real> KernelDynamics<T> {
    /// `a = −ϑ`, `∂ₓb = ϑ ∂₂b₀`.
    pub fn from_drift(spec: &DriftSpec<T>, theta: f64) -> Self {
        let th = T::lit(theta);
        let db0 = spec.db0.clone();
        Self { a: -theta, db: Arc::new(move |t, x| th * db0(t, x)), sigma: spec.sigma.clone() }
    }

    /// `X = B`.
    pub fn pure_noise() -> Self {
        Self { a: 0.0, db: Arc::new(|_, _| T::zero()), sigma: Arc::new(|_| T::one()) }
    }
}

/// Per-replicate derivative data over grid indices `start..=end`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateKernel<T> {
    pub start: usize,
    pub sigma: Vec<T>,
    /// One-step derivative factors `∂X_{m+1}/∂X_m`.
    pub factor: Vec<T>,
    /// Running trapezoid integral of `−(a + ∂ₓb)` from `start`.
    pub cumulative: Vec<f64>,
}

impl<T: Real> ReplicateKernel<T> {
    pub fn build(
        dynamics: &KernelDynamics<T>,
        rule: DerivativeRule,
        path: &[T],
        grid: &TimeGrid,
        time_shift: f64,
        start: usize,
        end: usize,
    ) -> Self {
        let dt = grid.dt;
        let n = end - start + 1;
        let e = T::lit((dynamics.a * dt).exp());
        let phi = T::lit(if dynamics.a == 0.0 { dt } else { ((dynamics.a * dt).exp() - 1.0) / dynamics.a });
        let mut sigma = Vec::with_capacity(n);
        let mut rate = Vec::with_capacity(n);
        let mut scheme = Vec::with_capacity(n);
        for k in start..=end {
            let t = T::lit(grid.time(k) + time_shift);
            let db = (dynamics.db)(t, path[k]);
            sigma.push((dynamics.sigma)(t));
            rate.push(-(dynamics.a + db.to_f64_lossy()));
            scheme.push(e + phi * db);
        }
        let mut cumulative = vec![0.0; n];
        for i in 1..n {
            cumulative[i] = cumulative[i - 1] + 0.5 * dt * (rate[i - 1] + rate[i]);
        }
        let factor = match rule {
            DerivativeRule::Scheme => scheme,
            DerivativeRule::Trapezoid => {
                (0..n).map(|i| if i + 1 < n { T::lit((cumulative[i] - cumulative[i + 1]).exp()) } else { T::one() }).collect()
            }
        };
        Self { start, sigma, factor, cumulative }
    }

    /// `γ(k−j) dt^{2H} ∂X_k/∂ΔB_j` summed over `start ≤ j < k`, for each
    /// `k` in `from..to`. `gamma` holds `γ(l) dt^{2H}`.
    pub fn derivative_sums(&self, gamma: &[T], from: usize, to: usize, truncation: f64) -> Vec<T> {
        let tol = T::lit(truncation);
        let s0 = self.start;
        let rho = |m: usize| self.factor[m - s0];
        let sig = |m: usize| self.sigma[m - s0];
        let mut out = Vec::with_capacity(to.saturating_sub(from));
        let mut k = from;
        while k < to {
            let width = BLOCK.min(to - k);
            let mut acc = [T::zero(); BLOCK];
            let mut g = T::one();
            let mut j = k;
            while j > s0 {
                j -= 1;
                let w = sig(j) * g;
                let lag = k - j;
                for (i, a) in acc.iter_mut().enumerate().take(width) {
                    *a = *a + gamma[lag + i] * w;
                }
                g = g * rho(j);
                if g.abs() < tol {
                    break;
                }
            }
            // acc[i] misses the factors ρ_k..ρ_{k+i−1} and the terms k ≤ j < k+i.
            let mut carry = T::one();
            for (i, a) in acc.iter().enumerate().take(width) {
                let target = k + i;
                let mut near = T::zero();
                let mut p = T::one();
                for j in (k..target).rev() {
                    near = near + gamma[target - j] * sig(j) * p;
                    p = p * rho(j);
                }
                out.push(carry * *a + near);
                carry = carry * rho(target);
            }
            k += width;
        }
        out
    }

    /// `D_{t_j} X(t_k)` for `start ≤ j ≤ k`.
    pub fn value(&self, j: usize, k: usize) -> T {
        if j > k || j < self.start {
            return T::zero();
        }
        let mut p = self.sigma[j - self.start];
        for m in j + 1..k {
            p = p * self.factor[m - self.start];
        }
        p
    }
}

/// Malliavin derivative of a scalar solution, stored per replicate in
/// compact form; [`MalliavinKernel::value`] expands single entries.
#[derive(Debug, Clone)]
pub struct MalliavinKernel<T> {
    pub grid: TimeGrid,
    pub hurst: HurstIndex,
    pub theta: f64,
    pub options: KernelOptions,
    /// Integration window `[0, T]` as grid indices.
    pub window: (usize, usize),
    pub time_shift: f64,
    pub replicates: Vec<ReplicateKernel<T>>,
}

/// Builds the kernel of a drift model with parameter `theta_used` on the
/// grid-aligned window `[0, T]`.
pub fn malliavin_kernel<T: Real>(
    paths: &PathEnsemble<T>,
    theta_used: f64,
    window: (f64, f64),
    options: KernelOptions,
) -> Result<MalliavinKernel<T>> {
    let spec = paths.drift_spec()?;
    kernel_with_dynamics(paths, &KernelDynamics::from_drift(spec, theta_used), theta_used, window, options)
}

/// Kernel for arbitrary scalar linearized dynamics.
pub fn kernel_with_dynamics<T: Real>(
    paths: &PathEnsemble<T>,
    dynamics: &KernelDynamics<T>,
    theta_used: f64,
    window: (f64, f64),
    options: KernelOptions,
) -> Result<MalliavinKernel<T>> {
    if paths.dim != 1 {
        return Err(Error::DimensionUnsupported(paths.dim));
    }
    let (a, b) = paths.grid.window(window.0, window.1)?;
    let start = match options.support {
        KernelSupport::FullPath => 0,
        KernelSupport::Window => a,
    };
    let replicates = (0..paths.replicate_count)
        .into_par_iter()
        .map(|r| {
            ReplicateKernel::build(dynamics, options.rule, paths.replicate(r), &paths.grid, paths.time_shift, start, b)
        })
        .collect();
    Ok(MalliavinKernel {
        grid: paths.grid,
        hurst: paths.driving.hurst,
        theta: theta_used,
        options,
        window: (a, b),
        time_shift: paths.time_shift,
        replicates,
    })
}

/// `γ(l) dt^{2H}` for `l = 0..len`.
pub fn gamma_table<T: Real>(hurst: HurstIndex, dt: f64, len: usize) -> Vec<T> {
    let scale = dt.powf(2.0 * hurst.value());
    (0..len).map(|l| T::lit(fgn_autocovariance(l as u64, hurst) * scale)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelBoundReport {
    pub replicates: usize,
    pub violating_replicates: usize,
    /// `max |D_sX(t)| e^{ϑ̲ m̲ (t−s)} / ‖σ‖_∞` over all pairs and replicates.
    pub max_ratio: f64,
}

impl KernelBoundReport {
    pub fn holds(&self) -> bool {
        self.violating_replicates == 0
    }
}

impl<T: Real> MalliavinKernel<T> {
    pub fn value(&self, replicate: usize, s: usize, t: usize) -> T {
        let rk = &self.replicates[replicate];
        match self.options.rule {
            DerivativeRule::Scheme => {
                if s == t && s >= rk.start {
                    rk.sigma[s - rk.start]
                } else {
                    rk.value(s, t)
                }
            }
            DerivativeRule::Trapezoid => {
                if s > t || s < rk.start {
                    return T::zero();
                }
                let c = rk.cumulative[t - rk.start] - rk.cumulative[s - rk.start];
                rk.sigma[s - rk.start] * T::lit((-c).exp())
            }
        }
    }

    /// Lower-triangular rows `D_{t_j} X(t_k)`, `j ≤ k`, over the window.
    pub fn dense(&self, replicate: usize) -> Vec<Vec<T>> {
        let (a, b) = self.window;
        (a..=b).map(|k| (a..=k).map(|j| self.value(replicate, j, k)).collect()).collect()
    }

    /// Checks `|D_sX(t)| ≤ ‖σ‖_∞ e^{−ϑ̲ m̲ (t−s)}` on every grid pair of the
    /// support, in log form with a rounding allowance of `1e-12` relative.
    pub fn bound_check(&self, sigma_sup: f64, theta_lower: f64, m_lower: f64) -> KernelBoundReport {
        let rate = theta_lower * m_lower;
        let per: Vec<f64> = self
            .replicates
            .par_iter()
            .map(|rk| {
                let n = rk.sigma.len();
                let mut worst = f64::NEG_INFINITY;
                match self.options.rule {
                    DerivativeRule::Trapezoid => {
                        let mut best = f64::NEG_INFINITY;
                        for i in 0..n {
                            let t = i as f64 * self.grid.dt;
                            best = best.max(rk.sigma[i].to_f64_lossy().abs().ln() + rk.cumulative[i] - rate * t);
                            let slack = 1e-12 * (1.0 + rk.cumulative[i].abs() + rate * t);
                            worst = worst.max(best - rk.cumulative[i] + rate * t - slack);
                        }
                    }
                    DerivativeRule::Scheme => {
                        let mut cum = vec![0.0; n + 1];
                        for i in 0..n {
                            cum[i + 1] = cum[i] + rk.factor[i].to_f64_lossy().abs().ln();
                        }
                        let mut best = f64::NEG_INFINITY;
                        for i in 0..n {
                            let t = i as f64 * self.grid.dt;
                            let ls = rk.sigma[i].to_f64_lossy().abs().ln();
                            let slack = 1e-12 * (1.0 + cum[i].abs() + rate * t);
                            worst = worst.max(best + cum[i] + rate * t - slack).max(ls);
                            best = best.max(ls - cum[i + 1] - rate * t);
                        }
                    }
                }
                worst
            })
            .collect();
        let log_sup = sigma_sup.ln();
        let violating = per.iter().filter(|&&w| w > log_sup).count();
        let max_log = per.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        KernelBoundReport {
            replicates: per.len(),
            violating_replicates: violating,
            max_ratio: if sigma_sup > 0.0 { (max_log - log_sup).exp() } else { f64::INFINITY },
        }
    }
}

/// Integrand `φ(t, x)` with its state derivative.
#[derive(Clone)]
pub struct TestFunction<T> {
    pub name: String,
    pub phi: ScalarField<T>,
    pub dphi: ScalarField<T>,
    /// `∂₂φ ≡ 0`.
    pub deterministic: bool,
}

impl<T> fmt::Debug for TestFunction<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction").field("name", &self.name).field("deterministic", &self.deterministic).finish()
    }
}

pub const TEST_FUNCTIONS: &[&str] = &["zero", "one", "cos_time", "identity", "sine", "tanh", "residual"];

impl<T: Real> TestFunction<T> {
    pub fn new(name: impl Into<String>, phi: ScalarField<T>, dphi: ScalarField<T>, deterministic: bool) -> Self {
        Self { name: name.into(), phi, dphi, deterministic }
    }

    /// `φ(t, x) = x − b₀(t, x)`.
    pub fn residual(spec: &DriftSpec<T>) -> Self {
        let b0 = spec.b0.clone();
        let db0 = spec.db0.clone();
        Self::new("residual", Arc::new(move |t, x| x - b0(t, x)), Arc::new(move |t, x| T::one() - db0(t, x)), false)
    }

    /// Named test function; `residual` needs the drift.
    pub fn catalog(name: &str, spec: Option<&DriftSpec<T>>) -> Result<Self> {
        let f = match name {
            "zero" => Self::new(name, Arc::new(|_, _| T::zero()), Arc::new(|_, _| T::zero()), true),
            "one" => Self::new(name, Arc::new(|_, _| T::one()), Arc::new(|_, _| T::zero()), true),
            "cos_time" => Self::new(name, Arc::new(|t: T, _| t.cos()), Arc::new(|_, _| T::zero()), true),
            "identity" => Self::new(name, Arc::new(|_, x| x), Arc::new(|_, _| T::one()), false),
            "sine" => Self::new(name, Arc::new(|_, x: T| x.sin()), Arc::new(|_, x: T| x.cos()), false),
            "tanh" => Self::new(
                name,
                Arc::new(|_, x: T| x.tanh()),
                Arc::new(|_, x: T| {
                    let c = x.tanh();
                    T::one() - c * c
                }),
                false,
            ),
            "residual" => Self::residual(spec.ok_or(Error::NotDriftModel)?),
            other => return Err(Error::InvalidArgument(format!("unknown test function `{other}`"))),
        };
        Ok(f)
    }

    /// `a φ + b ψ`.
    pub fn combine(a: f64, phi: &Self, b: f64, psi: &Self) -> Self {
        let (a, b) = (T::lit(a), T::lit(b));
        let (p1, p2) = (phi.phi.clone(), psi.phi.clone());
        let (d1, d2) = (phi.dphi.clone(), psi.dphi.clone());
        Self::new(
            format!("{a}*{} + {b}*{}", phi.name, psi.name),
            Arc::new(move |t, x| a * p1(t, x) + b * p2(t, x)),
            Arc::new(move |t, x| a * d1(t, x) + b * d2(t, x)),
            phi.deterministic && psi.deterministic,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkorokhodResult {
    pub young_integral: f64,
    /// `∬ D_s u_t |t−s|^{2H−2}`, so that `value = young − α_H · trace`.
    pub trace_correction: f64,
    pub skorokhod_value: f64,
    pub alpha_h: f64,
}

/// Left-point sum `Σ y_k (x_{k+1} − x_k)` over grid indices `a..b`.
pub fn young_integral<T: Real>(y: &[T], x: &[T], window: (usize, usize)) -> Result<T> {
    crate::wiener::riemann_sum(y, x, window)
}

/// Per-replicate pieces shared by every test function.
struct ReplicateWork<T> {
    sums: Option<Vec<T>>,
}

fn replicate_result<T: Real>(
    phi: &TestFunction<T>,
    paths: &PathEnsemble<T>,
    kernel: &MalliavinKernel<T>,
    r: usize,
    work: &ReplicateWork<T>,
) -> SkorokhodResult {
    let (a, b) = kernel.window;
    let x = paths.replicate(r);
    let noise = paths.noise(r, 0);
    let rk = &kernel.replicates[r];
    let alpha = kernel.hurst.alpha();
    let mut young = Vec::with_capacity(b - a);
    let mut raw = Vec::with_capacity(b - a);
    for k in a..b {
        let t = T::lit(paths.grid.time(k) + paths.time_shift);
        let s = rk.sigma[k - rk.start];
        young.push(((phi.phi)(t, x[k]) * s * (noise[k + 1] - noise[k])).to_f64_lossy());
        if let Some(sums) = &work.sums {
            raw.push(((phi.dphi)(t, x[k]) * s * sums[k - a]).to_f64_lossy());
        }
    }
    let young = pairwise_sum(&young);
    let raw = if raw.is_empty() { 0.0 } else { pairwise_sum(&raw) };
    SkorokhodResult {
        young_integral: young,
        trace_correction: if alpha > 0.0 { raw / alpha } else { 0.0 },
        skorokhod_value: young - raw,
        alpha_h: alpha,
    }
}

fn check_kernel<T: Real>(paths: &PathEnsemble<T>, kernel: &MalliavinKernel<T>) -> Result<()> {
    if paths.dim != 1 {
        return Err(Error::DimensionUnsupported(paths.dim));
    }
    if kernel.grid != paths.grid || kernel.replicates.len() != paths.replicate_count || kernel.time_shift != paths.time_shift {
        return Err(Error::KernelMismatch);
    }
    Ok(())
}

/// Skorokhod integrals of several test functions, sharing the trace sums.
/// Output is `[function][replicate]`.
pub fn skorokhod_batch<T: Real>(
    phis: &[TestFunction<T>],
    paths: &PathEnsemble<T>,
    kernel: &MalliavinKernel<T>,
) -> Result<Vec<Vec<SkorokhodResult>>> {
    check_kernel(paths, kernel)?;
    let (a, b) = kernel.window;
    let needs_trace = phis.iter().any(|p| !p.deterministic) && !kernel.hurst.is_reference();
    let gamma = if needs_trace { gamma_table::<T>(kernel.hurst, paths.grid.dt, b + BLOCK + 1) } else { Vec::new() };
    let per_rep: Vec<Vec<SkorokhodResult>> = (0..paths.replicate_count)
        .into_par_iter()
        .map(|r| {
            let sums = needs_trace.then(|| kernel.replicates[r].derivative_sums(&gamma, a, b, kernel.options.truncation));
            let work = ReplicateWork { sums };
            phis.iter()
                .map(|phi| {
                    if phi.deterministic {
                        replicate_result(phi, paths, kernel, r, &ReplicateWork { sums: None })
                    } else {
                        replicate_result(phi, paths, kernel, r, &work)
                    }
                })
                .collect()
        })
        .collect();
    Ok((0..phis.len()).map(|i| per_rep.iter().map(|v| v[i]).collect()).collect())
}

/// `δ(φ(·, X) σ 1_{[0,T]})` per replicate.
pub fn skorokhod_integral<T: Real>(
    phi: &TestFunction<T>,
    paths: &PathEnsemble<T>,
    kernel: &MalliavinKernel<T>,
) -> Result<Vec<SkorokhodResult>> {
    Ok(skorokhod_batch(std::slice::from_ref(phi), paths, kernel)?.remove(0))
}

/// `∫_0^T φ δX = −ϑ ∫_0^T φ(s, X)(X − b₀(s, X)) ds + δ(φ σ)` per replicate;
/// the Lebesgue part uses the trapezoid rule.
pub fn skorokhod_wrt_x<T: Real>(
    phi: &TestFunction<T>,
    paths: &PathEnsemble<T>,
    kernel: &MalliavinKernel<T>,
    theta_used: f64,
) -> Result<Vec<f64>> {
    let spec = paths.drift_spec()?;
    let sk = skorokhod_integral(phi, paths, kernel)?;
    let (a, b) = kernel.window;
    let dt = paths.grid.dt;
    Ok(sk
        .iter()
        .enumerate()
        .map(|(r, s)| {
            let x = paths.replicate(r);
            let f = |k: usize| {
                let t = T::lit(paths.grid.time(k) + paths.time_shift);
                ((phi.phi)(t, x[k]) * (x[k] - (spec.b0)(t, x[k]))).to_f64_lossy()
            };
            let cells: Vec<f64> = (a..b).map(|k| 0.5 * dt * (f(k) + f(k + 1))).collect();
            -theta_used * pairwise_sum(&cells) + s.skorokhod_value
        })
        .collect())
}

/// CSV with columns `replicate,young,trace,value`.
pub fn write_results_csv<W: Write>(results: &[SkorokhodResult], first_replicate: u64, mut w: W) -> Result<()> {
    writeln!(w, "replicate,young,trace,value")?;
    for (i, r) in results.iter().enumerate() {
        writeln!(w, "{},{},{},{}", first_replicate + i as u64, r.young_integral, r.trace_correction, r.skorokhod_value)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_sums(rk: &ReplicateKernel<f64>, gamma: &[f64], from: usize, to: usize) -> Vec<f64> {
        (from..to)
            .map(|k| (rk.start..k).map(|j| gamma[k - j] * rk.value(j, k)).sum())
            .collect()
    }

    #[test]
    fn blocked_sums_match_direct() {
        let n = 57;
        let rk = ReplicateKernel {
            start: 3,
            sigma: (0..n).map(|i| 1.0 + 0.1 * (i as f64).sin()).collect(),
            factor: (0..n).map(|i| 0.97 - 0.01 * (i as f64).cos()).collect(),
            cumulative: vec![0.0; n],
        };
        let h = HurstIndex::new(0.7).unwrap();
        let gamma = gamma_table::<f64>(h, 0.05, n + 3 + BLOCK + 1);
        let fast = rk.derivative_sums(&gamma, 10, 3 + n - 1, 0.0);
        let slow = brute_sums(&rk, &gamma, 10, 3 + n - 1);
        for (f, s) in fast.iter().zip(&slow) {
            assert!((f - s).abs() < 1e-13 * s.abs().max(1.0), "{f} {s}");
        }
    }
}
