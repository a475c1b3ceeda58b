//! Exact-covariance two-sided fractional Brownian motion on uniform grids.
//!
//! Increments are fractional Gaussian noise drawn by circulant embedding,
//! with a Cholesky fallback when the embedding is not positive semi-definite.

use std::io::{Read, Write};
use std::ops::Range;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{aligned_steps, TimeGrid};
use crate::scalar::{FftFn, Real};

/// Relative tolerance below which negative circulant eigenvalues are clamped.
pub const EIGEN_CLAMP: f64 = 1e-8;

const STREAM_TAG: &[u8; 8] = b"apfbm-v1";
const BINARY_MAGIC: &[u8; 8] = b"APFBMPTH";
const BINARY_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct HurstIndex(f64);

impl HurstIndex {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.5 && h < 1.0 {
            Ok(Self(h))
        } else {
            Err(Error::InvalidHurst(h))
        }
    }

    /// `H = 1/2`, standard Brownian motion; only meant for cross-checks.
    pub fn brownian_reference() -> Self {
        Self(0.5)
    }

    /// Accepts `1/2` only when `allow_reference` is set.
    pub fn with_reference(h: f64, allow_reference: bool) -> Result<Self> {
        if allow_reference && h == 0.5 {
            Ok(Self::brownian_reference())
        } else {
            Self::new(h)
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_reference(self) -> bool {
        self.0 == 0.5
    }

    /// `H(2H - 1)`, the constant in front of the singular kernel.
    #[inline]
    pub fn alpha(self) -> f64 {
        self.0 * (2.0 * self.0 - 1.0)
    }
}

/// Autocovariance of unit fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance(k: u64, h: HurstIndex) -> f64 {
    let two_h = 2.0 * h.value();
    match k {
        0 => 1.0,
        1..=7 => {
            let k = k as f64;
            0.5 * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).powf(two_h))
        }
        _ => fgn_tail(k as f64, two_h),
    }
}

// k^{2H} * sum_j binom(2H, 2j) k^{-2j}; avoids the cancellation of the
// second difference at large lags. All even-order terms are non-negative.
fn fgn_tail(k: f64, a: f64) -> f64 {
    let inv2 = 1.0 / (k * k);
    let mut binom = 1.0;
    let mut power = 1.0;
    let mut sum = 0.0;
    let mut n = 0.0;
    loop {
        binom *= (a - n) / (n + 1.0);
        binom *= (a - n - 1.0) / (n + 2.0);
        n += 2.0;
        power *= inv2;
        let term = binom * power;
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() || n > 200.0 {
            break;
        }
    }
    k.powf(a) * sum
}

/// Covariance of two-sided fBm, `½(|s|^{2H} + |t|^{2H} − |t−s|^{2H})`.
pub fn fbm_covariance(s: f64, t: f64, h: HurstIndex) -> f64 {
    let a = 2.0 * h.value();
    0.5 * (s.abs().powf(a) + t.abs().powf(a) - (t - s).abs().powf(a))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GenerationMethod {
    Circulant,
    Cholesky,
}

enum Factor<T: Real> {
    Circulant { scale: Vec<T>, fft: FftFn<T> },
    Cholesky { lower: Vec<T> },
}

/// Sampler of `n` consecutive unit-spacing fGn values.
pub struct FgnGenerator<T: Real> {
    n: usize,
    factor: Factor<T>,
}

impl<T: Real> FgnGenerator<T> {
    /// Circulant embedding, falling back to Cholesky when it is not PSD.
    pub fn new(n: usize, h: HurstIndex) -> Result<Self> {
        match Self::circulant(n, h) {
            Err(Error::CirculantNotPsd { .. }) => Self::cholesky(n, h),
            other => other,
        }
    }

    pub fn with_method(n: usize, h: HurstIndex, method: GenerationMethod) -> Result<Self> {
        match method {
            GenerationMethod::Circulant => Self::circulant(n, h),
            GenerationMethod::Cholesky => Self::cholesky(n, h),
        }
    }

    pub fn circulant(n: usize, h: HurstIndex) -> Result<Self> {
        let m = n.max(1).next_power_of_two();
        let size = 2 * m;
        let mut row: Vec<Complex<f64>> = (0..size)
            .map(|j| {
                let lag = if j <= m { j } else { size - j };
                Complex::new(fgn_autocovariance(lag as u64, h), 0.0)
            })
            .collect();
        let fft = f64::forward_fft(size);
        fft(&mut row);
        let max_eig = row.iter().map(|c| c.re).fold(f64::MIN, f64::max);
        let min_eig = row.iter().map(|c| c.re).fold(f64::MAX, f64::min);
        if min_eig < -EIGEN_CLAMP * max_eig {
            return Err(Error::CirculantNotPsd { min_eig, max_eig });
        }
        let scale = row
            .iter()
            .map(|c| T::lit((c.re.max(0.0) / size as f64).sqrt()))
            .collect();
        Ok(Self { n, factor: Factor::Circulant { scale, fft: T::forward_fft(size) } })
    }

    pub fn cholesky(n: usize, h: HurstIndex) -> Result<Self> {
        let gamma: Vec<f64> = (0..n).map(|k| fgn_autocovariance(k as u64, h)).collect();
        let cov = DMatrix::from_fn(n, n, |i, j| gamma[i.abs_diff(j)]);
        let chol = cov.cholesky().ok_or(Error::CholeskyFailed)?;
        let l = chol.l();
        let mut lower = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in 0..=i {
                lower.push(T::lit(l[(i, j)]));
            }
        }
        Ok(Self { n, factor: Factor::Cholesky { lower } })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn method(&self) -> GenerationMethod {
        match self.factor {
            Factor::Circulant { .. } => GenerationMethod::Circulant,
            Factor::Cholesky { .. } => GenerationMethod::Cholesky,
        }
    }

    /// Fills `out[..n]` with unit fGn.
    pub fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [T]) {
        let out = &mut out[..self.n];
        match &self.factor {
            Factor::Circulant { scale, fft } => {
                let mut buf: Vec<Complex<T>> = scale
                    .iter()
                    .map(|&s| Complex::new(s * T::standard_normal(rng), s * T::standard_normal(rng)))
                    .collect();
                fft(&mut buf);
                for (o, c) in out.iter_mut().zip(&buf) {
                    *o = c.re;
                }
            }
            Factor::Cholesky { lower } => {
                let z: Vec<T> = (0..self.n).map(|_| T::standard_normal(rng)).collect();
                let mut row = 0;
                for (i, o) in out.iter_mut().enumerate() {
                    let mut acc = T::zero();
                    for j in 0..=i {
                        acc = acc + lower[row + j] * z[j];
                    }
                    row += i + 1;
                    *o = acc;
                }
            }
        }
    }
}

/// Random stream for one (seed, replicate, component) triple.
pub fn stream_rng(seed: u64, replicate: u64, dim: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&replicate.to_le_bytes());
    key[16..24].copy_from_slice(&dim.to_le_bytes());
    key[24..].copy_from_slice(STREAM_TAG);
    ChaCha8Rng::from_seed(key)
}

/// Writes one anchored fBm path into `out` (length `grid.n_points`).
pub fn sample_path<T: Real>(
    gen: &FgnGenerator<T>,
    grid: &TimeGrid,
    h: HurstIndex,
    seed: u64,
    replicate: u64,
    dim: u64,
    out: &mut [T],
) -> Result<()> {
    let i0 = grid.index_of_zero().ok_or(Error::GridMissingZero)?;
    let n = grid.n_points;
    if gen.len() + 1 != n || out.len() != n {
        return Err(Error::InvalidArgument("generator length does not match the grid".into()));
    }
    let mut rng = stream_rng(seed, replicate, dim);
    gen.sample(&mut rng, &mut out[1..]);
    let scale = T::lit(grid.dt.powf(h.value()));
    out[0] = T::zero();
    for k in 1..n {
        out[k] = out[k - 1] + scale * out[k];
    }
    let anchor = out[i0];
    for v in out.iter_mut() {
        *v = *v - anchor;
    }
    out[i0] = T::zero();
    Ok(())
}

/// Discretized two-sided fBm paths for a block of replicates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FbmEnsemble<T> {
    pub grid: TimeGrid,
    pub hurst: HurstIndex,
    pub dim: usize,
    pub seed: u64,
    pub first_replicate: u64,
    pub replicate_count: usize,
    pub method: GenerationMethod,
    /// Layout `[replicate][component][k]`.
    pub paths: Vec<T>,
}

impl<T: Real> FbmEnsemble<T> {
    #[inline]
    pub fn path(&self, replicate: usize, component: usize) -> &[T] {
        let n = self.grid.n_points;
        let start = (replicate * self.dim + component) * n;
        &self.paths[start..start + n]
    }

    pub fn replicate_id(&self, replicate: usize) -> u64 {
        self.first_replicate + replicate as u64
    }

    pub fn value_at(&self, replicate: usize, component: usize, t: f64) -> Result<T> {
        Ok(self.path(replicate, component)[self.grid.index_of(t)?])
    }

    /// CSV with columns `t,replicate,dim,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,replicate,dim,value")?;
        for r in 0..self.replicate_count {
            for j in 0..self.dim {
                for (k, v) in self.path(r, j).iter().enumerate() {
                    writeln!(w, "{},{},{},{}", self.grid.time(k), self.replicate_id(r), j, v)?;
                }
            }
        }
        Ok(())
    }

    /// Little-endian binary dump.
    ///
    /// Header: magic `APFBMPTH`, u32 version, u32 scalar width in bytes,
    /// f64 H, f64 dt, i64 grid offset, u64 point count, u64 d, u64 seed,
    /// u64 first replicate, u64 replicate count, u8 method. Values follow in
    /// `[replicate][component][k]` order.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::with_capacity(80 + self.paths.len() * T::BYTES);
        buf.extend_from_slice(BINARY_MAGIC);
        buf.extend_from_slice(&BINARY_VERSION.to_le_bytes());
        buf.extend_from_slice(&(T::BYTES as u32).to_le_bytes());
        buf.extend_from_slice(&self.hurst.value().to_le_bytes());
        buf.extend_from_slice(&self.grid.dt.to_le_bytes());
        buf.extend_from_slice(&self.grid.offset.to_le_bytes());
        buf.extend_from_slice(&(self.grid.n_points as u64).to_le_bytes());
        buf.extend_from_slice(&(self.dim as u64).to_le_bytes());
        buf.extend_from_slice(&self.seed.to_le_bytes());
        buf.extend_from_slice(&self.first_replicate.to_le_bytes());
        buf.extend_from_slice(&(self.replicate_count as u64).to_le_bytes());
        buf.push(match self.method {
            GenerationMethod::Circulant => 0,
            GenerationMethod::Cholesky => 1,
        });
        for &v in &self.paths {
            v.write_le(&mut buf);
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(8)? != BINARY_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(cur.array()?);
        if version != BINARY_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let width = u32::from_le_bytes(cur.array()?) as usize;
        if width != T::BYTES {
            return Err(Error::Format(format!("scalar width {width} does not match reader")));
        }
        let h = f64::from_le_bytes(cur.array()?);
        let dt = f64::from_le_bytes(cur.array()?);
        let offset = i64::from_le_bytes(cur.array()?);
        let n_points = u64::from_le_bytes(cur.array()?) as usize;
        let dim = u64::from_le_bytes(cur.array()?) as usize;
        let seed = u64::from_le_bytes(cur.array()?);
        let first_replicate = u64::from_le_bytes(cur.array()?);
        let replicate_count = u64::from_le_bytes(cur.array()?) as usize;
        let method = match cur.take(1)?[0] {
            0 => GenerationMethod::Circulant,
            1 => GenerationMethod::Cholesky,
            m => return Err(Error::Format(format!("unknown method tag {m}"))),
        };
        let count = replicate_count * dim * n_points;
        let body = cur.take(count * width)?;
        if cur.pos != bytes.len() {
            return Err(Error::Format("trailing bytes".into()));
        }
        let paths = body.chunks_exact(width).map(T::read_le).collect();
        let hurst = HurstIndex::with_reference(h, true)?;
        Ok(Self {
            grid: TimeGrid::new(offset, dt, n_points)?,
            hurst,
            dim,
            seed,
            first_replicate,
            replicate_count,
            method,
            paths,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Format("truncated input".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.take(N)?);
        Ok(a)
    }
}

/// Samples `replicates` paths of dimension `dim` (replicate ids `0..replicates`).
pub fn sample_ensemble<T: Real>(
    grid: TimeGrid,
    h: HurstIndex,
    dim: usize,
    replicates: usize,
    seed: u64,
) -> Result<FbmEnsemble<T>> {
    sample_replicates(grid, h, dim, 0..replicates as u64, seed, None)
}

/// Samples the replicate ids in `ids`; any sub-range reproduces the
/// corresponding paths of the full ensemble bit for bit.
pub fn sample_replicates<T: Real>(
    grid: TimeGrid,
    h: HurstIndex,
    dim: usize,
    ids: Range<u64>,
    seed: u64,
    method: Option<GenerationMethod>,
) -> Result<FbmEnsemble<T>> {
    if !grid.spans_zero() {
        return Err(Error::GridMissingZero);
    }
    if dim == 0 || ids.is_empty() {
        return Err(Error::InvalidArgument("need at least one replicate and component".into()));
    }
    let gen = match method {
        Some(m) => FgnGenerator::with_method(grid.n_points - 1, h, m)?,
        None => FgnGenerator::new(grid.n_points - 1, h)?,
    };
    let n = grid.n_points;
    let count = (ids.end - ids.start) as usize;
    let mut paths = vec![T::zero(); count * dim * n];
    paths
        .par_chunks_mut(n)
        .enumerate()
        .try_for_each(|(idx, out)| {
            let r = ids.start + (idx / dim) as u64;
            let j = (idx % dim) as u64;
            sample_path(&gen, &grid, h, seed, r, j, out)
        })?;
    Ok(FbmEnsemble {
        grid,
        hurst: h,
        dim,
        seed,
        first_replicate: ids.start,
        replicate_count: count,
        method: gen.method(),
        paths,
    })
}

/// The path `t ↦ B(t+τ, θ_{−τ}ω) = B(t, ω) − B(−τ, ω)` on a grid window.
///
/// Shifts are kept as integer step counts on the base path, so composing
/// shifts is exact.
#[derive(Debug, Clone, Copy)]
pub struct ShiftedPath<'a, T> {
    base: &'a [T],
    grid: TimeGrid,
    shift_steps: i64,
    window: (usize, usize),
}

impl<'a, T: Real> ShiftedPath<'a, T> {
    pub fn new(base: &'a [T], grid: TimeGrid, tau: f64, window: (f64, f64)) -> Result<Self> {
        let steps = aligned_steps(tau, grid.dt).ok_or(Error::TauOffGrid { tau, dt: grid.dt })?;
        let (a, b) = grid.window(window.0, window.1).map_err(|_| Error::ShiftOutOfRange)?;
        Self::from_steps(base, grid, steps, (a, b))
    }

    pub fn from_steps(base: &'a [T], grid: TimeGrid, shift_steps: i64, window: (usize, usize)) -> Result<Self> {
        if base.len() != grid.n_points || window.0 > window.1 || window.1 >= grid.n_points {
            return Err(Error::ShiftOutOfRange);
        }
        grid.index_of_step(-shift_steps).ok_or(Error::ShiftOutOfRange)?;
        Ok(Self { base, grid, shift_steps, window })
    }

    pub fn tau(&self) -> f64 {
        self.shift_steps as f64 * self.grid.dt
    }

    pub fn shift_steps(&self) -> i64 {
        self.shift_steps
    }

    /// Index window into the base grid.
    pub fn window(&self) -> (usize, usize) {
        self.window
    }

    #[inline]
    fn anchor(&self) -> T {
        self.base[self.grid.index_of_step(-self.shift_steps).unwrap()]
    }

    /// Value at base-grid index `k` (inside the window).
    #[inline]
    pub fn at(&self, k: usize) -> T {
        self.base[k] - self.anchor()
    }

    pub fn values(&self) -> Vec<T> {
        let anchor = self.anchor();
        self.base[self.window.0..=self.window.1].iter().map(|&v| v - anchor).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        (self.window.0..=self.window.1).map(|k| self.grid.time(k)).collect()
    }

    /// Shift by a further `tau`; equal to a single shift by the total.
    pub fn compose(&self, tau: f64) -> Result<Self> {
        let steps = aligned_steps(tau, self.grid.dt).ok_or(Error::TauOffGrid { tau, dt: self.grid.dt })?;
        Self::from_steps(self.base, self.grid, self.shift_steps + steps, self.window)
    }
}

/// Wiener-shifted path of replicate `replicate`, component `component`.
pub fn wiener_shift_path<T: Real>(
    ensemble: &FbmEnsemble<T>,
    tau: f64,
    replicate: usize,
    component: usize,
    window: (f64, f64),
) -> Result<ShiftedPath<'_, T>> {
    ShiftedPath::new(ensemble.path(replicate, component), ensemble.grid, tau, window)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(v: f64) -> HurstIndex {
        HurstIndex::new(v).unwrap()
    }

    #[test]
    fn hurst_range() {
        assert!(HurstIndex::new(0.5).is_err());
        assert!(HurstIndex::new(1.0).is_err());
        assert!(HurstIndex::with_reference(0.5, true).unwrap().is_reference());
        assert!(HurstIndex::with_reference(0.5, false).is_err());
    }

    #[test]
    fn tail_series_matches_direct_difference() {
        for hv in [0.55, 0.7, 0.95] {
            for k in 8u64..40 {
                let kf = k as f64;
                let a = 2.0 * hv;
                let direct = 0.5 * ((kf + 1.0).powf(a) - 2.0 * kf.powf(a) + (kf - 1.0).powf(a));
                let series = fgn_autocovariance(k, h(hv));
                assert!((direct - series).abs() < 1e-10 * series.abs().max(1e-3), "{hv} {k}");
            }
        }
    }

    #[test]
    fn circulant_first_moments() {
        let gen = FgnGenerator::<f64>::circulant(100, h(0.7)).unwrap();
        assert_eq!(gen.method(), GenerationMethod::Circulant);
        let mut out = vec![0.0; 100];
        let mut rng = stream_rng(1, 0, 0);
        gen.sample(&mut rng, &mut out);
        assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn anchored_at_zero() {
        let grid = TimeGrid::covering(-2.0, 3.0, 0.1).unwrap();
        let ens = sample_ensemble::<f64>(grid, h(0.7), 2, 3, 9).unwrap();
        let i0 = grid.index_of_zero().unwrap();
        for r in 0..3 {
            for j in 0..2 {
                assert_eq!(ens.path(r, j)[i0], 0.0);
            }
        }
    }

    #[test]
    fn sub_range_matches_full() {
        let grid = TimeGrid::covering(-1.0, 1.0, 0.05).unwrap();
        let full = sample_ensemble::<f64>(grid, h(0.6), 1, 6, 4).unwrap();
        let part = sample_replicates::<f64>(grid, h(0.6), 1, 2..5, 4, None).unwrap();
        for r in 0..3 {
            assert_eq!(full.path(r + 2, 0), part.path(r, 0));
        }
    }
}
