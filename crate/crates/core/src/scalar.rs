//! Floating-point scalar abstraction shared by the numerical kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::sync::Arc;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// In-place FFT of a fixed length.
pub type FftFn<T> = Arc<dyn Fn(&mut [Complex<T>]) + Send + Sync>;

/// Real scalar usable by every kernel in the crate (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Conversion from an `f64` literal.
    fn lit(x: f64) -> Self;

    fn to_f64_lossy(self) -> f64;

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Forward FFT plan of length `len`.
    fn forward_fft(len: usize) -> FftFn<Self>;

    /// Number of bytes in the little-endian encoding.
    const BYTES: usize;

    fn write_le(self, out: &mut Vec<u8>);

    fn read_le(bytes: &[u8]) -> Self;
}

macro_rules! impl_real {
    ($t:ty, $n:expr) => {
        impl Real for $t {
            #[inline]
            fn lit(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn to_f64_lossy(self) -> f64 {
                self as f64
            }

            #[inline]
            fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.sample(StandardNormal)
            }

            fn forward_fft(len: usize) -> FftFn<Self> {
                let plan = FftPlanner::<$t>::new().plan_fft_forward(len);
                Arc::new(move |buf: &mut [Complex<$t>]| plan.process(buf))
            }

            const BYTES: usize = $n;

            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }

            fn read_le(bytes: &[u8]) -> Self {
                let mut buf = [0u8; $n];
                buf.copy_from_slice(&bytes[..$n]);
                <$t>::from_le_bytes(buf)
            }
        }
    };
}

impl_real!(f32, 4);
impl_real!(f64, 8);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_of_impulse_is_flat() {
        for len in [4usize, 16] {
            let fft = f64::forward_fft(len);
            let mut buf = vec![Complex::new(0.0, 0.0); len];
            buf[0] = Complex::new(1.0, 0.0);
            fft(&mut buf);
            assert!(buf.iter().all(|c| (c.re - 1.0).abs() < 1e-12 && c.im.abs() < 1e-12));
        }
    }

    #[test]
    fn le_roundtrip() {
        let mut out = Vec::new();
        1.25f32.write_le(&mut out);
        (-3.5f64).write_le(&mut out);
        assert_eq!(f32::read_le(&out[..4]), 1.25);
        assert_eq!(f64::read_le(&out[4..]), -3.5);
    }
}
