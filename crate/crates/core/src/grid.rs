//! Uniform time grids anchored on integer multiples of `dt`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `t_k = (offset + k) * dt`, `k = 0..n_points`.
///
/// Storing the integer offset keeps `t = 0` exact whenever the grid spans it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub offset: i64,
    pub n_points: usize,
}

impl TimeGrid {
    pub fn new(offset: i64, dt: f64, n_points: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        if n_points == 0 {
            return Err(Error::InvalidArgument("grid needs at least one point".into()));
        }
        Ok(Self { dt, offset, n_points })
    }

    /// Smallest grid of step `dt` covering `[t_start, t_end]`.
    pub fn covering(t_start: f64, t_end: f64, dt: f64) -> Result<Self> {
        if t_end < t_start {
            return Err(Error::InvalidArgument(format!("empty interval [{t_start}, {t_end}]")));
        }
        let lo = steps_floor(t_start, dt);
        let hi = steps_ceil(t_end, dt);
        Self::new(lo, dt, (hi - lo) as usize + 1)
    }

    #[inline]
    pub fn t_start(&self) -> f64 {
        self.offset as f64 * self.dt
    }

    #[inline]
    pub fn t_end(&self) -> f64 {
        (self.offset + self.n_points as i64 - 1) as f64 * self.dt
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        (self.offset + k as i64) as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_points).map(|k| self.time(k)).collect()
    }

    pub fn index_of_zero(&self) -> Option<usize> {
        self.index_of_step(0)
    }

    pub fn spans_zero(&self) -> bool {
        self.index_of_zero().is_some()
    }

    /// Index of the point with absolute step number `step`.
    #[inline]
    pub fn index_of_step(&self, step: i64) -> Option<usize> {
        let k = step - self.offset;
        (k >= 0 && (k as usize) < self.n_points).then_some(k as usize)
    }

    /// Index of a grid time, rejecting values that are not grid-aligned.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let step = aligned_steps(t, self.dt).ok_or(Error::WindowOffGrid { start: t, end: t })?;
        self.index_of_step(step).ok_or(Error::WindowOffGrid { start: t, end: t })
    }

    /// Inclusive index range of a grid-aligned window.
    pub fn window(&self, start: f64, end: f64) -> Result<(usize, usize)> {
        let off = || Error::WindowOffGrid { start, end };
        if end < start {
            return Err(off());
        }
        let a = self.index_of(start).map_err(|_| off())?;
        let b = self.index_of(end).map_err(|_| off())?;
        Ok((a, b))
    }

    /// Sub-grid `[a, b]` (inclusive indices).
    pub fn slice(&self, a: usize, b: usize) -> Self {
        Self { dt: self.dt, offset: self.offset + a as i64, n_points: b - a + 1 }
    }

    pub fn span(&self) -> f64 {
        self.t_end() - self.t_start()
    }
}

/// Integer step count of `t` when `t` lies on the lattice `dt * Z`.
pub fn aligned_steps(t: f64, dt: f64) -> Option<i64> {
    let q = t / dt;
    let r = q.round();
    ((q - r).abs() <= 1e-9 * r.abs().max(1.0)).then_some(r as i64)
}

fn steps_floor(t: f64, dt: f64) -> i64 {
    aligned_steps(t, dt).unwrap_or_else(|| (t / dt).floor() as i64)
}

fn steps_ceil(t: f64, dt: f64) -> i64 {
    aligned_steps(t, dt).unwrap_or_else(|| (t / dt).ceil() as i64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_is_exact() {
        let g = TimeGrid::covering(-3.3, 2.0, 0.1).unwrap();
        let i0 = g.index_of_zero().unwrap();
        assert_eq!(g.time(i0), 0.0);
        assert!(g.t_start() <= -3.3 + 1e-12);
        assert!(g.t_end() >= 2.0 - 1e-12);
    }

    #[test]
    fn window_alignment() {
        let g = TimeGrid::covering(0.0, 1.0, 0.25).unwrap();
        assert_eq!(g.window(0.25, 1.0).unwrap(), (1, 4));
        assert!(g.window(0.3, 1.0).is_err());
        assert!(g.window(0.0, 1.25).is_err());
    }
}
