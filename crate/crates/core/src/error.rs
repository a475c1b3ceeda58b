use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("Hurst index {0} outside (1/2, 1); use the Brownian reference mode for 1/2")]
    InvalidHurst(f64),

    #[error("grid does not contain t = 0")]
    GridMissingZero,

    #[error("circulant embedding not positive semi-definite (min eigenvalue {min_eig:e}, max {max_eig:e})")]
    CirculantNotPsd { min_eig: f64, max_eig: f64 },

    #[error("covariance matrix not positive definite")]
    CholeskyFailed,

    #[error("shift {tau} is not a multiple of dt = {dt}")]
    TauOffGrid { tau: f64, dt: f64 },

    #[error("shifted window leaves the grid")]
    ShiftOutOfRange,

    #[error("window [{start}, {end}] is not aligned with the grid")]
    WindowOffGrid { start: f64, end: f64 },

    #[error("non-finite integrand sample at t = {t}")]
    QuadratureDiverged { t: f64 },

    #[error("integrand carries no decay hint")]
    NoDecayHint,

    #[error("integrand violates its decay hint at t = {t}")]
    DecayHintViolated { t: f64 },

    #[error("state left the overflow guard at step {step}")]
    StepDiverged { step: usize },

    #[error("contraction ratio {ratio} is not below 1")]
    ContractionViolated { ratio: f64 },

    #[error("kernel and paths do not share grid and replicates")]
    KernelMismatch,

    #[error("only d = 1 is supported here (got d = {0})")]
    DimensionUnsupported(usize),

    #[error("V_T = {0:e} is degenerate")]
    DegenerateVT(f64),

    #[error("horizon {horizon} exceeds the grid span {span}")]
    HorizonExceedsGrid { horizon: f64, span: f64 },

    #[error("no overlap between the signal and its shift")]
    EmptyOverlap,

    #[error("model is not a scalar drift-estimation model")]
    NotDriftModel,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
