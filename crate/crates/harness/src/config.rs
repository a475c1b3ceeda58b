//! Flat key/value experiment configuration.
//!
//! The file is TOML restricted to top-level keys:
//!
//! ```text
//! model = "example4"        # example1..example4, fou, custom
//! theta = 1.0
//! sigma = 1.0
//! hurst = 0.7
//! dt = 0.05
//! horizon = 40.0
//! burn_in_multiplier = 40.0
//! replicates = 200
//! seed = 1
//! ladder = [50.0, 200.0, 800.0]
//! output_dir = "out"
//! ```
//!
//! `APFBM_SEED` and `APFBM_OUTPUT_DIR` override `seed` and `output_dir`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use apfbm::sde::{contraction_ratio, DriftSpec, Periodicity, DRIFT_CATALOG};
use apfbm::skorokhod::DEFAULT_TRUNCATION;
use apfbm::{HurstIndex, KernelOptions, TwoSidedSetup};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::expr::Expr;

pub const SEED_ENV: &str = "APFBM_SEED";
pub const OUTPUT_ENV: &str = "APFBM_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorChoice {
    Oracle,
    FixedPoint,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Binary,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: String,
    pub theta: f64,
    pub sigma: f64,
    /// `b₀(t, x)` for `model = "custom"`.
    pub custom_b0: Option<String>,
    /// `∂₂b₀`; central differences when absent.
    pub custom_db0: Option<String>,
    pub custom_m_lower: f64,
    pub custom_m_upper: f64,
    pub custom_period: Option<f64>,
    pub hurst: f64,
    pub allow_reference: bool,
    pub dt: f64,
    pub horizon: f64,
    pub burn_in_multiplier: f64,
    pub history: f64,
    pub replicates: usize,
    pub chunk: usize,
    pub seed: u64,
    pub ladder: Vec<f64>,
    pub output_dir: PathBuf,
    pub estimator: EstimatorChoice,
    pub fixed_point_replicates: usize,
    pub format: OutputFormat,
    pub tau: f64,
    pub probe_times: Vec<f64>,
    pub test_function: String,
    pub suites: Vec<u8>,
    pub scan_band: f64,
    /// Relative cutoff of the trace-kernel products; raise it for drifts
    /// with slow kernel decay.
    pub kernel_truncation: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: "example4".into(),
            theta: 1.0,
            sigma: 1.0,
            custom_b0: None,
            custom_db0: None,
            custom_m_lower: 0.5,
            custom_m_upper: 0.5,
            custom_period: None,
            hurst: 0.7,
            allow_reference: false,
            dt: 0.05,
            horizon: 40.0,
            burn_in_multiplier: 40.0,
            history: 0.0,
            replicates: 100,
            chunk: 50,
            seed: 1,
            ladder: vec![50.0, 200.0, 800.0],
            output_dir: PathBuf::from("apfbm-out"),
            estimator: EstimatorChoice::Both,
            fixed_point_replicates: 100,
            format: OutputFormat::Csv,
            tau: 10.0,
            probe_times: vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0],
            test_function: "residual".into(),
            suites: (1..=11).collect(),
            scan_band: 2.0,
            kernel_truncation: DEFAULT_TRUNCATION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug)]
pub enum ConfigError {
    Read(std::io::Error),
    Parse(String),
    Invalid(Vec<FieldError>),
    ContractionViolated { ratio: f64 },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Read(e) => write!(f, "cannot read config: {e}"),
            ConfigError::Parse(e) => write!(f, "cannot parse config: {e}"),
            ConfigError::Invalid(errs) => {
                write!(f, "invalid config:")?;
                for e in errs {
                    write!(f, "\n  {}: {}", e.field, e.message)?;
                }
                Ok(())
            }
            ConfigError::ContractionViolated { ratio } => {
                write!(f, "drift violates the contraction condition (c_S c_b / m_S = {ratio:.4} >= 1)")
            }
        }
    }
}

impl std::error::Error for ConfigError {}

fn aligned(t: f64, dt: f64) -> bool {
    let k = t / dt;
    (k - k.round()).abs() <= 1e-9 * k.abs().max(1.0)
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Reads, applies environment overrides and validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(ConfigError::Read)?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(s) = get(SEED_ENV) {
            self.seed = s.trim().parse().map_err(|_| {
                ConfigError::Invalid(vec![FieldError { field: SEED_ENV.into(), message: format!("`{s}` is not an unsigned integer") }])
            })?;
        }
        if let Some(dir) = get(OUTPUT_ENV) {
            self.output_dir = PathBuf::from(dir);
        }
        Ok(())
    }

    /// Field-level checks, then the contraction guard on the drift.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let mut bad = |field: &str, message: String| errs.push(FieldError { field: field.into(), message });
        if self.model != "custom" && !DRIFT_CATALOG.contains(&self.model.as_str()) {
            bad("model", format!("unknown model `{}`; expected one of {:?} or `custom`", self.model, DRIFT_CATALOG));
        }
        if self.model == "custom" && self.custom_b0.is_none() {
            bad("custom_b0", "required when model = \"custom\"".into());
        }
        for (field, src) in [("custom_b0", &self.custom_b0), ("custom_db0", &self.custom_db0)] {
            if let Some(src) = src {
                if let Err(e) = Expr::parse(src) {
                    bad(field, e);
                }
            }
        }
        if !(self.theta > 0.0) {
            bad("theta", "must be positive".into());
        }
        if !self.sigma.is_finite() {
            bad("sigma", "must be finite".into());
        }
        if HurstIndex::with_reference(self.hurst, self.allow_reference).is_err() {
            bad("hurst", "must lie in (1/2, 1); 1/2 needs allow_reference = true".into());
        }
        if !(self.dt > 0.0) {
            bad("dt", "must be positive".into());
        } else {
            if !(self.horizon > 0.0) || !aligned(self.horizon, self.dt) {
                bad("horizon", "must be a positive multiple of dt".into());
            }
            if self.ladder.iter().any(|&t| !aligned(t, self.dt)) {
                bad("ladder", "every horizon must be a multiple of dt".into());
            }
            if !aligned(self.tau, self.dt) {
                bad("tau", "must be a multiple of dt".into());
            }
            if self.probe_times.is_empty() || self.probe_times.iter().any(|&t| !aligned(t, self.dt) || t < 0.0) {
                bad("probe_times", "must be non-empty, non-negative multiples of dt".into());
            }
        }
        if self.ladder.is_empty() || self.ladder[0] <= 0.0 || self.ladder.windows(2).any(|w| w[1] <= w[0]) {
            bad("ladder", "must be positive and strictly increasing".into());
        }
        if !(self.burn_in_multiplier > 0.0) {
            bad("burn_in_multiplier", "must be positive".into());
        }
        if !(self.history >= 0.0) {
            bad("history", "must be non-negative".into());
        }
        if self.replicates == 0 {
            bad("replicates", "must be at least 1".into());
        }
        if self.chunk == 0 {
            bad("chunk", "must be at least 1".into());
        }
        if self.suites.iter().any(|&s| !(1..=11).contains(&s)) {
            bad("suites", "suite ids run from 1 to 11".into());
        }
        if !(self.kernel_truncation > 0.0 && self.kernel_truncation <= 1e-3) {
            bad("kernel_truncation", "must lie in (0, 1e-3]".into());
        }
        if !(self.scan_band > 0.0) {
            bad("scan_band", "must be positive".into());
        }
        if !(0.0..1.0).contains(&self.custom_m_lower) || !(0.0..1.0).contains(&self.custom_m_upper) {
            bad("custom_m_lower", "derivative bounds must lie in [0, 1)".into());
        }
        if !errs.is_empty() {
            return Err(ConfigError::Invalid(errs));
        }
        let spec = self.drift()?;
        let ratio = contraction_ratio(&spec.model());
        if !(ratio < 1.0) {
            return Err(ConfigError::ContractionViolated { ratio });
        }
        Ok(())
    }

    pub fn hurst_index(&self) -> HurstIndex {
        HurstIndex::with_reference(self.hurst, self.allow_reference).expect("validated hurst index")
    }

    /// The configured drift. Custom drifts are probed on a grid of
    /// `(t, x)` and their Lipschitz constant is raised to the largest
    /// observed `|∂₂b₀|` when that exceeds the declared bounds.
    pub fn drift(&self) -> Result<DriftSpec<f64>, ConfigError> {
        if self.model != "custom" {
            return DriftSpec::catalog(&self.model, self.theta, self.sigma)
                .map_err(|e| ConfigError::Invalid(vec![FieldError { field: "model".into(), message: e.to_string() }]));
        }
        let field = |name: &str, e: String| ConfigError::Invalid(vec![FieldError { field: name.into(), message: e }]);
        let b0 = Expr::parse(self.custom_b0.as_deref().unwrap_or("")).map_err(|e| field("custom_b0", e))?;
        let db0 = match &self.custom_db0 {
            Some(src) => Some(Expr::parse(src).map_err(|e| field("custom_db0", e))?),
            None => None,
        };
        let s = self.sigma;
        let periodicity = match self.custom_period {
            Some(p) => Periodicity::Periodic(p),
            None => Periodicity::AlmostPeriodic,
        };
        let b0f = b0.clone();
        let mut spec = DriftSpec::custom(
            "custom",
            self.theta,
            Arc::new(move |t, x| b0f.eval(t, x)),
            db0.map(|d| -> apfbm::sde::ScalarField<f64> { Arc::new(move |t, x| d.eval(t, x)) }),
            Arc::new(move |_| s),
            s.abs(),
            self.custom_m_lower,
            self.custom_m_upper,
            periodicity,
        );
        let report = spec.check_derivative_bounds(4000, 17);
        let observed = report.max_derivative.abs().max(report.min_derivative.abs());
        spec.lipschitz = spec.lipschitz.max(observed);
        Ok(spec)
    }

    pub fn setup(&self) -> TwoSidedSetup {
        TwoSidedSetup {
            burn_in_multiplier: self.burn_in_multiplier,
            history: self.history,
            ..TwoSidedSetup::new(self.hurst_index(), self.dt, self.horizon, self.seed)
        }
    }

    pub fn kernel_options(&self) -> KernelOptions {
        KernelOptions { truncation: self.kernel_truncation, ..KernelOptions::default() }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn env_overrides() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_env(|k| match k {
            SEED_ENV => Some("42".into()),
            OUTPUT_ENV => Some("/tmp/x".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.output_dir, PathBuf::from("/tmp/x"));
    }

    #[test]
    fn field_diagnostics() {
        let cfg = ExperimentConfig { dt: 0.03, horizon: 1.0, hurst: 0.4, ..Default::default() };
        match cfg.validate() {
            Err(ConfigError::Invalid(errs)) => {
                let fields: Vec<&str> = errs.iter().map(|e| e.field.as_str()).collect();
                assert!(fields.contains(&"hurst"));
                assert!(fields.contains(&"horizon"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml_str("modle = \"fou\"").is_err());
    }
}
