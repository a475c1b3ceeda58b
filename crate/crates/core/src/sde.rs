//! Semilinear SDEs `dX = (AX + b(t, X)) dt + σ(t) dB` driven by fBm.
//!
//! Integration uses the exponential Euler scheme
//! `X_{k+1} = e^{A dt} X_k + Φ b(t_k, X_k) + σ(t_k) ΔB_k` with
//! `Φ = ∫_0^{dt} e^{As} ds`, exact for the linear part.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::io::Write;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::{sample_replicates, wiener_shift_path, FbmEnsemble, HurstIndex};
use crate::grid::{aligned_steps, TimeGrid};
use crate::scalar::Real;
use crate::stats::pairwise_sum;

/// States beyond this norm abort the integration.
pub const OVERFLOW_GUARD: f64 = 1e100;

/// Step of the central difference used for drifts without an analytic
/// derivative.
pub const FD_STEP: f64 = 1e-6;

pub type DriftFn<T> = Arc<dyn Fn(T, &[T], &mut [T]) + Send + Sync>;
pub type SigmaFn<T> = Arc<dyn Fn(T, &mut [T]) + Send + Sync>;
pub type ScalarField<T> = Arc<dyn Fn(T, T) -> T + Send + Sync>;
pub type TimeFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Periodicity {
    AlmostPeriodic,
    Periodic(f64),
    Autonomous,
}

/// `(A, b, σ)` together with the structural constants of the model.
#[derive(Clone)]
pub struct SemilinearModel<T> {
    pub name: String,
    pub dim: usize,
    /// Row-major `d × d`.
    pub a: Vec<f64>,
    pub drift: DriftFn<T>,
    /// Fills a row-major `d × d` buffer.
    pub sigma: SigmaFn<T>,
    pub c_s: f64,
    pub m_s: f64,
    pub c_b: f64,
    pub m_b: f64,
    pub periodicity: Periodicity,
}

impl<T> fmt::Debug for SemilinearModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SemilinearModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("a", &self.a)
            .field("c_s", &self.c_s)
            .field("m_s", &self.m_s)
            .field("c_b", &self.c_b)
            .field("m_b", &self.m_b)
            .field("periodicity", &self.periodicity)
            .finish()
    }
}

/// `c_S c_b / m_S`.
pub fn contraction_ratio<T>(model: &SemilinearModel<T>) -> f64 {
    model.c_s * model.c_b / model.m_s
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DriftKind {
    Example1,
    Example2,
    Example3,
    Example4,
    Fou,
    Custom(String),
}

impl DriftKind {
    pub fn name(&self) -> &str {
        match self {
            DriftKind::Example1 => "example1",
            DriftKind::Example2 => "example2",
            DriftKind::Example3 => "example3",
            DriftKind::Example4 => "example4",
            DriftKind::Fou => "fou",
            DriftKind::Custom(s) => s,
        }
    }
}

/// Scalar estimation model `dX = −ϑ(X − b₀(t, X)) dt + σ(t) dB`.
#[derive(Clone)]
pub struct DriftSpec<T> {
    pub kind: DriftKind,
    pub theta: f64,
    /// Known lower bound on the parameter.
    pub theta_lower: f64,
    pub b0: ScalarField<T>,
    /// `∂₂b₀`.
    pub db0: ScalarField<T>,
    pub sigma: TimeFn<T>,
    /// `sup |σ|`.
    pub sigma_sup: f64,
    pub m_lower: f64,
    pub m_upper: f64,
    /// Lipschitz constant of `b₀` in `x`.
    pub lipschitz: f64,
    pub periodicity: Periodicity,
}

impl<T> fmt::Debug for DriftSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftSpec")
            .field("kind", &self.kind)
            .field("theta", &self.theta)
            .field("theta_lower", &self.theta_lower)
            .field("sigma_sup", &self.sigma_sup)
            .field("m_lower", &self.m_lower)
            .field("m_upper", &self.m_upper)
            .field("lipschitz", &self.lipschitz)
            .field("periodicity", &self.periodicity)
            .finish()
    }
}

pub const DRIFT_CATALOG: &[&str] = &["example1", "example2", "example3", "example4", "fou"];

fn trig_a<T: Real>(t: T) -> T {
    t.cos() + (T::lit(SQRT_2) * t).sin()
}

fn trig_b<T: Real>(t: T) -> T {
    t.sin() + (T::lit(SQRT_2) * t).cos()
}

impl<T: Real> DriftSpec<T> {
    /// Catalog drift with constant `σ = sigma`.
    pub fn catalog(name: &str, theta: f64, sigma: f64) -> Result<Self> {
        let q = T::lit(0.25);
        let e = T::lit(0.125);
        let half = T::lit(0.5);
        let (kind, b0, db0, periodicity, lipschitz): (DriftKind, ScalarField<T>, ScalarField<T>, _, _) =
            match name {
                "example1" => (
                    DriftKind::Example1,
                    Arc::new(move |t: T, x: T| q * trig_a(t) * x),
                    Arc::new(move |t: T, _x: T| q * trig_a(t)),
                    Periodicity::AlmostPeriodic,
                    0.5,
                ),
                "example2" => (
                    DriftKind::Example2,
                    Arc::new(move |t: T, x: T| q * trig_b(t) * x.atan()),
                    Arc::new(move |t: T, x: T| q * trig_b(t) / (T::one() + x * x)),
                    Periodicity::AlmostPeriodic,
                    0.5,
                ),
                "example3" => (
                    DriftKind::Example3,
                    Arc::new(move |t: T, x: T| e * trig_a(t) * x + e * trig_b(t) * x.atan()),
                    Arc::new(move |t: T, x: T| e * trig_a(t) + e * trig_b(t) / (T::one() + x * x)),
                    Periodicity::AlmostPeriodic,
                    0.5,
                ),
                "example4" => (
                    DriftKind::Example4,
                    Arc::new(move |t: T, x: T| half * t.cos() * x),
                    Arc::new(move |t: T, _x: T| half * t.cos()),
                    Periodicity::Periodic(2.0 * PI),
                    0.5,
                ),
                "fou" => (
                    DriftKind::Fou,
                    Arc::new(|_t: T, _x: T| T::zero()),
                    Arc::new(|_t: T, _x: T| T::zero()),
                    Periodicity::Autonomous,
                    0.0,
                ),
                other => return Err(Error::InvalidArgument(format!("unknown drift `{other}`"))),
            };
        let (m_lower, m_upper) = if kind == DriftKind::Fou { (0.9, 0.1) } else { (0.5, 0.5) };
        let s = T::lit(sigma);
        Ok(Self {
            kind,
            theta,
            theta_lower: theta,
            b0,
            db0,
            sigma: Arc::new(move |_t| s),
            sigma_sup: sigma.abs(),
            m_lower,
            m_upper,
            lipschitz,
            periodicity,
        })
    }

    /// User drift; `db0 = None` selects a central difference with step
    /// [`FD_STEP`].
    #[allow(clippy::too_many_arguments)]
    pub fn custom(
        name: impl Into<String>,
        theta: f64,
        b0: ScalarField<T>,
        db0: Option<ScalarField<T>>,
        sigma: TimeFn<T>,
        sigma_sup: f64,
        m_lower: f64,
        m_upper: f64,
        periodicity: Periodicity,
    ) -> Self {
        let db0 = db0.unwrap_or_else(|| central_difference(b0.clone(), FD_STEP));
        Self {
            kind: DriftKind::Custom(name.into()),
            theta,
            theta_lower: theta,
            b0,
            db0,
            sigma,
            sigma_sup,
            m_lower,
            m_upper,
            lipschitz: (1.0 - m_lower).max(m_upper),
            periodicity,
        }
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self.theta_lower = self.theta_lower.min(theta);
        self
    }

    /// `c_b = ϑ · lipschitz`; equals `ϑ[(1 − m̲) ∨ m̄]` for the catalog
    /// drifts other than `fou`.
    pub fn c_b(&self) -> f64 {
        self.theta * self.lipschitz
    }

    /// Drift viewed as a semilinear model: `A = −ϑ`, `b = ϑ b₀`.
    pub fn model(&self) -> SemilinearModel<T> {
        let theta = T::lit(self.theta);
        let b0 = self.b0.clone();
        let sigma = self.sigma.clone();
        let zero_drift = probe_sup(|t| b0(T::lit(t), T::zero()).to_f64_lossy().abs());
        SemilinearModel {
            name: self.kind.name().to_string(),
            dim: 1,
            a: vec![-self.theta],
            drift: Arc::new(move |t, x, out| out[0] = theta * b0(t, x[0])),
            sigma: Arc::new(move |t, out| out[0] = sigma(t)),
            c_s: 1.0,
            m_s: self.theta,
            c_b: self.c_b(),
            m_b: self.c_b().max(self.theta * zero_drift),
            periodicity: self.periodicity,
        }
    }

    /// Randomized probe of `−m̄ ≤ ∂₂b₀ ≤ 1 − m̲`, also comparing `db0`
    /// against a central difference.
    pub fn check_derivative_bounds(&self, probes: usize, seed: u64) -> DerivativeReport {
        let fd = central_difference(self.b0.clone(), FD_STEP);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut min_d = f64::INFINITY;
        let mut max_d = f64::NEG_INFINITY;
        let mut fd_err: f64 = 0.0;
        for _ in 0..probes {
            let t = T::lit(rng.gen_range(0.0..200.0));
            let x = T::lit(rng.gen_range(-20.0..20.0));
            let d = (self.db0)(t, x).to_f64_lossy();
            min_d = min_d.min(d);
            max_d = max_d.max(d);
            fd_err = fd_err.max((d - fd(t, x).to_f64_lossy()).abs());
        }
        let slack = 1e-12;
        DerivativeReport {
            probes,
            min_derivative: min_d,
            max_derivative: max_d,
            max_fd_error: fd_err,
            within_bounds: min_d >= -self.m_upper - slack && max_d <= 1.0 - self.m_lower + slack,
            fd_consistent: fd_err <= 1e-6,
            theta_ok: self.theta >= self.theta_lower && self.theta_lower > 0.0,
        }
    }
}

fn probe_sup(f: impl Fn(f64) -> f64) -> f64 {
    (0..2001).map(|i| f(i as f64 * 0.1)).fold(0.0, f64::max)
}

/// Central difference in the state variable.
pub fn central_difference<T: Real>(f: ScalarField<T>, step: f64) -> ScalarField<T> {
    let h = T::lit(step);
    let two_h = T::lit(2.0 * step);
    Arc::new(move |t, x| (f(t, x + h) - f(t, x - h)) / two_h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub probes: usize,
    pub min_derivative: f64,
    pub max_derivative: f64,
    pub max_fd_error: f64,
    pub within_bounds: bool,
    pub fd_consistent: bool,
    pub theta_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// `max_t ‖e^{At}‖ / (c_S e^{−m_S t})` over `[0, 50/m_S]`.
    pub semigroup_ratio: f64,
    /// `max ‖b(t,x) − b(t,y)‖ / (c_b ‖x − y‖)`.
    pub lipschitz_ratio: f64,
    /// `max ‖b(t,x)‖ / (m_b (1 + ‖x‖))`.
    pub growth_ratio: f64,
    pub sigma_sup: f64,
    pub probes: usize,
}

impl AssumptionReport {
    pub fn holds(&self) -> bool {
        let slack = 1.0 + 1e-9;
        self.semigroup_ratio <= slack
            && self.lipschitz_ratio <= slack
            && self.growth_ratio <= slack
            && self.sigma_sup.is_finite()
    }
}

/// Probe-based check of the semigroup bound, the Lipschitz and growth
/// bounds of `b`, and boundedness of `σ`.
pub fn check_assumptions<T: Real>(model: &SemilinearModel<T>, probes: usize, seed: u64) -> AssumptionReport {
    let d = model.dim;
    let a = DMatrix::from_row_slice(d, d, &model.a);
    let horizon = 50.0 / model.m_s;
    let mut semigroup_ratio: f64 = 0.0;
    for i in 0..=200 {
        let t = horizon * i as f64 / 200.0;
        let norm = (&a * t).exp().singular_values().max();
        semigroup_ratio = semigroup_ratio.max(norm / (model.c_s * (-model.m_s * t).exp()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bx = vec![T::zero(); d];
    let mut by = vec![T::zero(); d];
    let mut sig = vec![T::zero(); d * d];
    let mut lipschitz_ratio: f64 = 0.0;
    let mut growth_ratio: f64 = 0.0;
    let mut sigma_sup: f64 = 0.0;
    for _ in 0..probes {
        let t = T::lit(rng.gen_range(-200.0..200.0));
        let x: Vec<T> = (0..d).map(|_| T::lit(rng.gen_range(-20.0..20.0))).collect();
        let y: Vec<T> = (0..d).map(|_| T::lit(rng.gen_range(-20.0..20.0))).collect();
        (model.drift)(t, &x, &mut bx);
        (model.drift)(t, &y, &mut by);
        let dxy = norm(x.iter().zip(&y).map(|(a, b)| *a - *b));
        let dbb = norm(bx.iter().zip(&by).map(|(a, b)| *a - *b));
        if dxy > 0.0 {
            let r = if model.c_b > 0.0 { dbb / (model.c_b * dxy) } else if dbb > 0.0 { f64::INFINITY } else { 0.0 };
            lipschitz_ratio = lipschitz_ratio.max(r);
        }
        let nb = norm(bx.iter().copied());
        let g = if model.m_b > 0.0 {
            nb / (model.m_b * (1.0 + norm(x.iter().copied())))
        } else if nb > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        growth_ratio = growth_ratio.max(g);
        (model.sigma)(t, &mut sig);
        let s = DMatrix::from_iterator(d, d, sig.iter().map(|v| v.to_f64_lossy()));
        sigma_sup = sigma_sup.max(s.singular_values().max());
    }
    AssumptionReport { semigroup_ratio, lipschitz_ratio, growth_ratio, sigma_sup, probes }
}

fn norm<T: Real>(it: impl Iterator<Item = T>) -> f64 {
    it.map(|v| v.to_f64_lossy().powi(2)).sum::<f64>().sqrt()
}

/// Precomputed `e^{A dt}` and `Φ = ∫_0^{dt} e^{As} ds` (row-major).
#[derive(Debug, Clone)]
pub struct Stepper<T> {
    pub dim: usize,
    pub dt: f64,
    pub e: Vec<T>,
    pub phi: Vec<T>,
}

impl<T: Real> Stepper<T> {
    pub fn new(a: &[f64], dim: usize, dt: f64) -> Self {
        let (e, phi) = exponential_pair(a, dim, dt);
        Self { dim, dt, e: e.into_iter().map(T::lit).collect(), phi: phi.into_iter().map(T::lit).collect() }
    }
}

/// `(e^{A dt}, ∫_0^{dt} e^{As} ds)` from the exponential of the augmented
/// matrix `[[A, I], [0, 0]] dt`.
pub fn exponential_pair(a: &[f64], d: usize, dt: f64) -> (Vec<f64>, Vec<f64>) {
    let mut aug = DMatrix::<f64>::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            aug[(i, j)] = a[i * d + j] * dt;
        }
        aug[(i, d + i)] = dt;
    }
    let ex = aug.exp();
    let mut e = Vec::with_capacity(d * d);
    let mut phi = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            e.push(ex[(i, j)]);
            phi.push(ex[(i, d + j)]);
        }
    }
    (e, phi)
}

/// Integrates one path over driving-grid indices `start..=end`.
///
/// `increment(k, j)` is the `j`-th component of the noise increment over
/// `[t_k, t_{k+1}]`; coefficients are evaluated at `t_k + time_shift`.
/// `out` receives `(end − start + 1) · d` states, starting with `x0`.
#[allow(clippy::too_many_arguments)]
pub fn integrate_path<T: Real>(
    model: &SemilinearModel<T>,
    stepper: &Stepper<T>,
    grid: &TimeGrid,
    time_shift: f64,
    range: (usize, usize),
    increment: impl Fn(usize, usize) -> T,
    x0: &[T],
    out: &mut [T],
) -> Result<()> {
    let d = model.dim;
    let (start, end) = range;
    out[..d].copy_from_slice(x0);
    let mut b = vec![T::zero(); d];
    let mut sig = vec![T::zero(); d * d];
    let mut db = vec![T::zero(); d];
    let guard = T::lit(OVERFLOW_GUARD);
    for k in start..end {
        let i = k - start;
        let t = T::lit(grid.time(k) + time_shift);
        let (prev, next) = out[i * d..(i + 2) * d].split_at_mut(d);
        (model.drift)(t, prev, &mut b);
        (model.sigma)(t, &mut sig);
        for (j, v) in db.iter_mut().enumerate() {
            *v = increment(k, j);
        }
        for r in 0..d {
            let mut acc = T::zero();
            for c in 0..d {
                acc = acc + stepper.e[r * d + c] * prev[c] + stepper.phi[r * d + c] * b[c] + sig[r * d + c] * db[c];
            }
            if !(acc.abs() <= guard) {
                return Err(Error::StepDiverged { step: k });
            }
            next[r] = acc;
        }
    }
    Ok(())
}

/// Solution trajectories aligned with a window of the driving grid.
#[derive(Clone)]
pub struct PathEnsemble<T: Real> {
    /// Solution grid, `[−T₀, T]` for two-sided runs.
    pub grid: TimeGrid,
    pub dim: usize,
    pub replicate_count: usize,
    /// Layout `[replicate][k][component]`.
    pub states: Vec<T>,
    pub driving: Arc<FbmEnsemble<T>>,
    /// Index in the driving grid of the first solution point.
    pub driving_offset: usize,
    pub burn_in: f64,
    /// Time shift applied to the coefficients.
    pub time_shift: f64,
    pub model: SemilinearModel<T>,
    pub drift: Option<DriftSpec<T>>,
}

impl<T: Real> fmt::Debug for PathEnsemble<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PathEnsemble")
            .field("grid", &self.grid)
            .field("dim", &self.dim)
            .field("replicate_count", &self.replicate_count)
            .field("burn_in", &self.burn_in)
            .field("time_shift", &self.time_shift)
            .field("model", &self.model)
            .finish()
    }
}

impl<T: Real> PathEnsemble<T> {
    /// States of one replicate, `[k][component]`.
    #[inline]
    pub fn replicate(&self, r: usize) -> &[T] {
        let n = self.grid.n_points * self.dim;
        &self.states[r * n..(r + 1) * n]
    }

    #[inline]
    pub fn state(&self, r: usize, k: usize, component: usize) -> T {
        self.replicate(r)[k * self.dim + component]
    }

    /// Driving path of replicate `r` on the solution grid.
    pub fn noise(&self, r: usize, component: usize) -> &[T] {
        let p = self.driving.path(r, component);
        &p[self.driving_offset..self.driving_offset + self.grid.n_points]
    }

    pub fn drift_spec(&self) -> Result<&DriftSpec<T>> {
        self.drift.as_ref().ok_or(Error::NotDriftModel)
    }

    /// Scalar path of replicate `r` (d = 1 only).
    pub fn scalar_path(&self, r: usize) -> Result<&[T]> {
        if self.dim != 1 {
            return Err(Error::DimensionUnsupported(self.dim));
        }
        Ok(self.replicate(r))
    }

    /// `mean_r ‖X_r(t_k)‖²` for every grid point.
    pub fn moment_profile(&self) -> Vec<f64> {
        (0..self.grid.n_points)
            .map(|k| {
                let v: Vec<f64> = (0..self.replicate_count)
                    .map(|r| norm((0..self.dim).map(|j| self.state(r, k, j))).powi(2))
                    .collect();
                pairwise_sum(&v) / v.len() as f64
            })
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.states.iter().all(|v| v.is_finite())
    }

    /// CSV with columns `t,replicate,component,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,replicate,component,value")?;
        for r in 0..self.replicate_count {
            for k in 0..self.grid.n_points {
                for j in 0..self.dim {
                    writeln!(
                        w,
                        "{},{},{},{}",
                        self.grid.time(k),
                        self.driving.replicate_id(r),
                        j,
                        self.state(r, k, j)
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// Integrates `model` on the driving-grid window `[t_start, t_end]` from
/// `x_init`.
pub fn integrate<T: Real>(
    model: &SemilinearModel<T>,
    driving: Arc<FbmEnsemble<T>>,
    window: (f64, f64),
    x_init: &[T],
) -> Result<PathEnsemble<T>> {
    integrate_shifted(model, None, driving, window, x_init, 0.0)
}

fn integrate_shifted<T: Real>(
    model: &SemilinearModel<T>,
    drift: Option<&DriftSpec<T>>,
    driving: Arc<FbmEnsemble<T>>,
    window: (f64, f64),
    x_init: &[T],
    burn_in: f64,
) -> Result<PathEnsemble<T>> {
    if driving.dim != model.dim || x_init.len() != model.dim {
        return Err(Error::InvalidArgument("dimension mismatch between model, noise and x_init".into()));
    }
    let ratio = contraction_ratio(model);
    if !ratio.is_finite() {
        return Err(Error::ContractionViolated { ratio });
    }
    let grid = driving.grid;
    let (a, b) = grid.window(window.0, window.1)?;
    let stepper = Stepper::new(&model.a, model.dim, grid.dt);
    let d = model.dim;
    let n = b - a + 1;
    let mut states = vec![T::zero(); driving.replicate_count * n * d];
    states.par_chunks_mut(n * d).enumerate().try_for_each(|(r, out)| {
        let paths: Vec<&[T]> = (0..d).map(|j| driving.path(r, j)).collect();
        integrate_path(model, &stepper, &grid, 0.0, (a, b), |k, j| paths[j][k + 1] - paths[j][k], x_init, out)
    })?;
    Ok(PathEnsemble {
        grid: grid.slice(a, b),
        dim: d,
        replicate_count: driving.replicate_count,
        states,
        driving,
        driving_offset: a,
        burn_in,
        time_shift: 0.0,
        model: model.clone(),
        drift: drift.cloned(),
    })
}

/// Parameters of a two-sided (burn-in) run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSidedSetup {
    pub hurst: HurstIndex,
    pub dt: f64,
    /// Right end `T` of the output window `[0, T]`.
    pub horizon: f64,
    /// `T₀ = burn_in_multiplier / m_S`.
    pub burn_in_multiplier: f64,
    /// Extra noise history before `−T₀`, needed for translations.
    pub history: f64,
    pub seed: u64,
}

impl TwoSidedSetup {
    pub fn new(hurst: HurstIndex, dt: f64, horizon: f64, seed: u64) -> Self {
        Self { hurst, dt, horizon, burn_in_multiplier: 40.0, history: 0.0, seed }
    }

    /// Burn-in depth rounded up to a multiple of `dt`.
    pub fn burn_in<T>(&self, model: &SemilinearModel<T>) -> f64 {
        let raw = self.burn_in_multiplier / model.m_s;
        (raw / self.dt - 1e-9).ceil() * self.dt
    }

    pub fn driving_grid<T>(&self, model: &SemilinearModel<T>) -> Result<TimeGrid> {
        let t0 = self.burn_in(model);
        TimeGrid::covering(-t0 - self.history, self.horizon, self.dt)
    }
}

/// Approximates the bounded two-sided solution on `[0, T]` by integrating
/// from `X(−T₀) = 0`.
pub fn integrate_two_sided<T: Real>(
    model: &SemilinearModel<T>,
    hurst: HurstIndex,
    dt: f64,
    horizon: f64,
    burn_in_multiplier: f64,
    replicates: usize,
    seed: u64,
) -> Result<PathEnsemble<T>> {
    let setup = TwoSidedSetup { burn_in_multiplier, ..TwoSidedSetup::new(hurst, dt, horizon, seed) };
    integrate_two_sided_with(model, None, &setup, 0..replicates as u64)
}

/// Two-sided run for the replicate ids `ids`; `drift` is attached to the
/// ensemble when given.
pub fn integrate_two_sided_with<T: Real>(
    model: &SemilinearModel<T>,
    drift: Option<&DriftSpec<T>>,
    setup: &TwoSidedSetup,
    ids: Range<u64>,
) -> Result<PathEnsemble<T>> {
    let ratio = contraction_ratio(model);
    if !(ratio < 1.0) {
        return Err(Error::ContractionViolated { ratio });
    }
    let grid = setup.driving_grid(model)?;
    let driving = Arc::new(sample_replicates(grid, setup.hurst, model.dim, ids, setup.seed, None)?);
    let t0 = setup.burn_in(model);
    let zero = vec![T::zero(); model.dim];
    integrate_shifted(model, drift, driving, (-t0, grid.t_end()), &zero, t0)
}

/// Two-sided run of a scalar drift model.
pub fn simulate_drift<T: Real>(spec: &DriftSpec<T>, setup: &TwoSidedSetup, ids: Range<u64>) -> Result<PathEnsemble<T>> {
    integrate_two_sided_with(&spec.model(), Some(spec), setup, ids)
}

/// The translated process `t ↦ X(t+τ, θ_{−τ}ω)` on the grid of `ensemble`.
///
/// The same model, with coefficients shifted by `τ`, is integrated from the
/// same burn-in start against the Wiener-shifted noise; replicate `r` of the
/// output pairs with replicate `r` of the input.
pub fn translate_solution<T: Real>(ensemble: &PathEnsemble<T>, tau: f64) -> Result<PathEnsemble<T>> {
    let dgrid = ensemble.driving.grid;
    let steps = aligned_steps(tau, dgrid.dt).ok_or(Error::TauOffGrid { tau, dt: dgrid.dt })?;
    if steps < 0 {
        return Err(Error::InvalidArgument("negative shifts are not supported".into()));
    }
    let s = steps as usize;
    if s > ensemble.driving_offset {
        return Err(Error::ShiftOutOfRange);
    }
    let start = ensemble.driving_offset - s;
    let end = ensemble.driving_offset + ensemble.grid.n_points - 1;
    let model = &ensemble.model;
    let d = model.dim;
    let stepper = Stepper::new(&model.a, d, dgrid.dt);
    let n_out = ensemble.grid.n_points;
    let time_shift = ensemble.time_shift + steps as f64 * dgrid.dt;
    let window = (dgrid.time(start), dgrid.time(end));
    let zero = vec![T::zero(); d];
    let mut states = vec![T::zero(); ensemble.replicate_count * n_out * d];
    states.par_chunks_mut(n_out * d).enumerate().try_for_each(|(r, out)| {
        let shifted: Vec<Vec<T>> = (0..d)
            .map(|j| wiener_shift_path(&ensemble.driving, tau, r, j, window).map(|p| p.values()))
            .collect::<Result<_>>()?;
        let mut full = vec![T::zero(); (end - start + 1) * d];
        integrate_path(
            model,
            &stepper,
            &dgrid,
            time_shift,
            (start, end),
            |k, j| shifted[j][k + 1 - start] - shifted[j][k - start],
            &zero,
            &mut full,
        )?;
        out.copy_from_slice(&full[s * d..]);
        Ok::<(), Error>(())
    })?;
    Ok(PathEnsemble { states, time_shift, ..ensemble.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_pair_scalar() {
        let (e, phi) = exponential_pair(&[-2.0], 1, 0.1);
        assert!((e[0] - (-0.2f64).exp()).abs() < 1e-15);
        assert!((phi[0] - (1.0 - (-0.2f64).exp()) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn exponential_pair_singular_a() {
        let (e, phi) = exponential_pair(&[0.0, 1.0, 0.0, 0.0], 2, 0.5);
        assert!((e[1] - 0.5).abs() < 1e-15 && (e[0] - 1.0).abs() < 1e-15);
        assert!((phi[0] - 0.5).abs() < 1e-15 && (phi[1] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn catalog_ratios() {
        for (name, ratio) in [("example1", 0.5), ("example4", 0.5), ("fou", 0.0)] {
            let spec = DriftSpec::<f64>::catalog(name, 1.0, 1.0).unwrap();
            assert_eq!(contraction_ratio(&spec.model()), ratio);
        }
    }
}
