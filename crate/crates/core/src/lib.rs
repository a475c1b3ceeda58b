//! Simulation and inference for semilinear SDEs driven by fractional
//! Brownian motion with `H ∈ (1/2, 1)`.
//!
//! The numerical core is generic over [`scalar::Real`] (`f32`, `f64`); the
//! aliases below fix `f64`.

// Negated comparisons reject NaN; index loops mirror the grid formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod ap;
pub mod error;
pub mod estimator;
pub mod fbm;
pub mod grid;
pub mod scalar;
pub mod sde;
pub mod skorokhod;
pub mod stats;
pub mod wiener;

pub use error::{Error, Result};
pub use fbm::{
    fbm_covariance, fgn_autocovariance, sample_ensemble, sample_replicates, wiener_shift_path, GenerationMethod,
    HurstIndex, ShiftedPath,
};
pub use grid::TimeGrid;
pub use scalar::Real;
pub use sde::{
    check_assumptions, integrate, integrate_two_sided, simulate_drift, translate_solution, DriftKind, Periodicity,
    TwoSidedSetup,
};
pub use skorokhod::{DerivativeRule, KernelOptions, KernelSupport};
pub use wiener::{hnorm, improper_wiener_second_moment, memin_bound, wiener_second_moment, DeterministicIntegrand, Quadrature};

pub type FbmEnsemble = fbm::FbmEnsemble<f64>;
pub type FgnGenerator = fbm::FgnGenerator<f64>;
pub type PathEnsemble = sde::PathEnsemble<f64>;
pub type SemilinearModel = sde::SemilinearModel<f64>;
pub type DriftSpec = sde::DriftSpec<f64>;
pub type MalliavinKernel = skorokhod::MalliavinKernel<f64>;
pub type TestFunction = skorokhod::TestFunction<f64>;
pub type SampledSignal = ap::SampledSignal<f64>;
