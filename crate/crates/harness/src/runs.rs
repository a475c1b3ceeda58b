//! Subcommand pipelines. Each writes into `<output_dir>/<command>/` and
//! keeps a manifest there.

use std::io::Write;
use std::path::PathBuf;

use apfbm::ap::{plain_squared_distances, theta_squared_distances, DeviationReport};
use apfbm::estimator::{
    consistency_experiment, estimate_fixed_point, estimate_oracle, mean_value_ap, squared_residual, EstimatorResult,
    ExperimentPlan, FixedPointOptions,
};
use apfbm::skorokhod::{malliavin_kernel, skorokhod_integral, write_results_csv, TestFunction};
use apfbm::stats::{iqr, median, quantile};
use apfbm::{DriftSpec, PathEnsemble, TwoSidedSetup};
use serde::Serialize;
use serde_json::json;

use crate::config::{ConfigError, EstimatorChoice, ExperimentConfig, OutputFormat};
use crate::manifest::{ManifestWriter, RunManifest};
use crate::suites::{AcceptanceConfig, Runner, SuiteStatus};
use crate::svg;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    TranslateCheck,
    ApScan,
    Estimate,
    Experiment,
    Accept,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::TranslateCheck => "translate-check",
            Command::ApScan => "ap-scan",
            Command::Estimate => "estimate",
            Command::Experiment => "experiment",
            Command::Accept => "accept",
        }
    }
}

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Io(std::io::Error),
    Compute(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
            RunError::Compute(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

impl From<apfbm::Error> for RunError {
    fn from(e: apfbm::Error) -> Self {
        RunError::Compute(e.to_string())
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

type Res<T> = Result<T, RunError>;

/// Scale of the acceptance suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Full,
    Smoke,
}

pub fn output_dir(cfg: &ExperimentConfig, cmd: Command) -> PathBuf {
    cfg.output_dir.join(cmd.name())
}

/// Validates, then runs `cmd`. Nothing is computed or written for an
/// invalid config.
pub fn run(cmd: Command, cfg: &ExperimentConfig, scale: Scale) -> Res<RunManifest> {
    cfg.validate()?;
    let mut w = ManifestWriter::create(&output_dir(cfg, cmd), cmd.name(), &cfg.hash())?;
    w.write_file("config.json", serde_json::to_string_pretty(cfg).map_err(std::io::Error::other)?.as_bytes())?;
    let result = match cmd {
        Command::Simulate => simulate(cfg, &mut w),
        Command::TranslateCheck => translate_check(cfg, &mut w),
        Command::ApScan => ap_scan(cfg, &mut w),
        Command::Estimate => estimate(cfg, &mut w),
        Command::Experiment => experiment(cfg, &mut w),
        Command::Accept => accept(cfg, scale, &mut w),
    };
    if let Err(e) = &result {
        w.fail(&e.to_string())?;
        return Err(result.unwrap_err());
    }
    Ok(w.finish()?)
}

fn id_chunks(total: usize, chunk: usize) -> impl Iterator<Item = std::ops::Range<u64>> {
    (0..total.div_ceil(chunk)).map(move |i| (i * chunk) as u64..((i + 1) * chunk).min(total) as u64)
}

fn json_bytes<T: Serialize>(v: &T) -> Res<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v).map_err(std::io::Error::other)?;
    s.push(b'\n');
    Ok(s)
}

const PATH_MAGIC: &[u8; 8] = b"APFBMX01";

/// Little-endian `magic, replicates u64, points u64, dim u64, t_start f64,
/// dt f64`, then states in `[replicate][k][component]` order.
fn write_paths_binary(out: &mut Vec<u8>, total: usize, paths: &PathEnsemble, header: bool) {
    if header {
        out.extend_from_slice(PATH_MAGIC);
        for v in [total as u64, paths.grid.n_points as u64, paths.dim as u64] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&paths.grid.t_start().to_le_bytes());
        out.extend_from_slice(&paths.grid.dt.to_le_bytes());
    }
    for v in &paths.states {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn simulate(cfg: &ExperimentConfig, w: &mut ManifestWriter) -> Res<()> {
    let spec = cfg.drift()?;
    let setup = cfg.setup();
    let mut csv = Vec::new();
    let mut bin = Vec::new();
    let mut second_moment = Vec::new();
    for (i, ids) in id_chunks(cfg.replicates, cfg.chunk).enumerate() {
        let paths = simulate_chunk(&spec, &setup, ids)?;
        if matches!(cfg.format, OutputFormat::Csv | OutputFormat::Both) {
            let mut part = Vec::new();
            paths.write_csv(&mut part)?;
            let skip = if i == 0 { 0 } else { part.iter().position(|&b| b == b'\n').map_or(0, |p| p + 1) };
            csv.extend_from_slice(&part[skip..]);
        }
        if matches!(cfg.format, OutputFormat::Binary | OutputFormat::Both) {
            write_paths_binary(&mut bin, cfg.replicates, &paths, i == 0);
        }
        let profile = paths.moment_profile();
        let n = paths.replicate_count as f64;
        if second_moment.is_empty() {
            second_moment = vec![0.0; profile.len()];
        }
        for (acc, m) in second_moment.iter_mut().zip(profile) {
            *acc += m * n / cfg.replicates as f64;
        }
    }
    if !csv.is_empty() {
        w.write_file("paths.csv", &csv)?;
    }
    if !bin.is_empty() {
        w.write_file("paths.bin", &bin)?;
    }
    let sup = second_moment.iter().copied().fold(0.0, f64::max);
    let summary = json!({
        "model": spec.kind.name(),
        "replicates": cfg.replicates,
        "grid_points": second_moment.len(),
        "sup_second_moment": sup,
        "burn_in": setup.burn_in(&spec.model()),
    });
    w.write_file("summary.json", &json_bytes(&summary)?)?;
    Ok(())
}

fn simulate_chunk(spec: &DriftSpec, setup: &TwoSidedSetup, ids: std::ops::Range<u64>) -> Res<PathEnsemble> {
    let paths = apfbm::simulate_drift(spec, setup, ids)?;
    if !paths.all_finite() {
        return Err(RunError::Compute("non-finite state in simulated paths".into()));
    }
    Ok(paths)
}

/// θ- and plain-translation deviations at the configured probe times.
fn deviations(cfg: &ExperimentConfig, spec: &DriftSpec) -> Res<(DeviationReport, DeviationReport)> {
    let top = cfg.probe_times.iter().copied().fold(0.0, f64::max);
    let setup = TwoSidedSetup { history: cfg.history.max(cfg.tau), horizon: top + cfg.tau, ..cfg.setup() };
    let n = cfg.probe_times.len();
    let (mut theta, mut plain) = (vec![Vec::new(); n], vec![Vec::new(); n]);
    for ids in id_chunks(cfg.replicates, cfg.chunk) {
        let paths = simulate_chunk(spec, &setup, ids)?;
        for (acc, d) in theta.iter_mut().zip(theta_squared_distances(&paths, cfg.tau, &cfg.probe_times)?) {
            acc.extend(d);
        }
        for (acc, d) in plain.iter_mut().zip(plain_squared_distances(&paths, cfg.tau, &cfg.probe_times)?) {
            acc.extend(d);
        }
    }
    Ok((
        DeviationReport::from_squared(cfg.tau, &cfg.probe_times, &theta),
        DeviationReport::from_squared(cfg.tau, &cfg.probe_times, &plain),
    ))
}

fn write_deviations(w: &mut ManifestWriter, theta: &DeviationReport, plain: &DeviationReport) -> Res<()> {
    let mut csv = String::from("probe_time,theta_deviation,plain_deviation\n");
    for ((t, a), b) in theta.probe_times.iter().zip(&theta.per_probe).zip(&plain.per_probe) {
        csv.push_str(&format!("{t},{a},{b}\n"));
    }
    w.write_file("deviation.csv", csv.as_bytes())?;
    let plot = svg::deviation_bars(
        &format!("translation deviations, tau = {}", theta.tau),
        &theta.probe_times,
        ("theta-translation", &theta.per_probe),
        ("plain translation", &plain.per_probe),
    );
    w.write_file("ap_deviation.svg", plot.as_bytes())?;
    Ok(())
}

fn translate_check(cfg: &ExperimentConfig, w: &mut ManifestWriter) -> Res<()> {
    let spec = cfg.drift()?;
    let (theta, plain) = deviations(cfg, &spec)?;
    write_deviations(w, &theta, &plain)?;
    let summary = json!({
        "model": spec.kind.name(),
        "tau": cfg.tau,
        "theta_ap_deviation": theta.max,
        "plain_ap_deviation": plain.max,
        "ratio": theta.max / plain.max,
        "theta": theta,
        "plain": plain,
    });
    w.write_file("summary.json", &json_bytes(&summary)?)?;
    Ok(())
}

fn ap_scan(cfg: &ExperimentConfig, w: &mut ManifestWriter) -> Res<()> {
    let spec = cfg.drift()?;
    let paths = simulate_chunk(&spec, &cfg.setup(), 0..cfg.replicates as u64)?;
    let horizons = [0.5 * cfg.horizon, cfg.horizon];
    let report = mean_value_ap(&paths, squared_residual(&spec), &horizons, cfg.scan_band)?;
    let mut csv = String::from("frequency\n");
    for f in &report.spectrum_frequencies {
        csv.push_str(&format!("{f}\n"));
    }
    w.write_file("spectrum.csv", csv.as_bytes())?;
    w.write_file("summary.json", &json_bytes(&report)?)?;
    Ok(())
}

fn estimator_rows(out: &mut String, results: &[EstimatorResult], first: u64, mode: &str) {
    for (i, r) in results.iter().enumerate() {
        out.push_str(&format!(
            "{},{mode},{},{},{},{},{}\n",
            first + i as u64,
            r.theta_hat,
            r.u_t,
            r.v_t,
            r.fixed_point_iterations,
            r.converged
        ));
    }
}

fn estimate_summary(values: &[f64], theta: f64) -> serde_json::Value {
    if values.is_empty() {
        return serde_json::Value::Null;
    }
    let err: Vec<f64> = values.iter().map(|v| (v - theta).abs()).collect();
    json!({
        "replicates": values.len(),
        "median": median(values),
        "q25": quantile(values, 0.25),
        "q75": quantile(values, 0.75),
        "iqr": iqr(values),
        "median_abs_error": median(&err),
    })
}

fn estimate(cfg: &ExperimentConfig, w: &mut ManifestWriter) -> Res<()> {
    let spec = cfg.drift()?;
    let window = (0.0, cfg.horizon);
    let phi = TestFunction::catalog(&cfg.test_function, Some(&spec))?;
    let fp_options = FixedPointOptions { tol: 1e-8, kernel: cfg.kernel_options(), ..FixedPointOptions::default() };
    let mut rows = String::from("replicate,mode,theta_hat,u_t,v_t,iterations,converged\n");
    let mut skorokhod = Vec::new();
    let (mut oracle, mut fixed) = (Vec::new(), Vec::new());
    for (i, ids) in id_chunks(cfg.replicates, cfg.chunk).enumerate() {
        let first = ids.start;
        let paths = simulate_chunk(&spec, &cfg.setup(), ids)?;
        let kernel = malliavin_kernel(&paths, spec.theta, window, cfg.kernel_options())?;
        let values = skorokhod_integral(&phi, &paths, &kernel)?;
        let mut part = Vec::new();
        write_results_csv(&values, first, &mut part)?;
        let skip = if i == 0 { 0 } else { part.iter().position(|&b| b == b'\n').map_or(0, |p| p + 1) };
        skorokhod.extend_from_slice(&part[skip..]);
        if cfg.estimator != EstimatorChoice::FixedPoint {
            let res = estimate_oracle(&paths, spec.theta, window, &cfg.kernel_options())?;
            estimator_rows(&mut rows, &res, first, "oracle");
            oracle.extend(res.iter().map(|r| r.theta_hat));
        }
        let fp_count = (cfg.fixed_point_replicates as u64).saturating_sub(first).min(paths.replicate_count as u64) as usize;
        if cfg.estimator != EstimatorChoice::Oracle && fp_count > 0 {
            let sub = apfbm::estimator::truncate_replicates(paths.clone(), fp_count);
            let res = estimate_fixed_point(&sub, None, window, &fp_options)?;
            estimator_rows(&mut rows, &res, first, "fixed_point");
            fixed.extend(res.iter().map(|r| r.theta_hat));
        }
    }
    w.write_file("estimates.csv", rows.as_bytes())?;
    w.write_file("skorokhod.csv", &skorokhod)?;
    let summary = json!({
        "model": spec.kind.name(),
        "theta": spec.theta,
        "horizon": cfg.horizon,
        "test_function": cfg.test_function,
        "oracle": estimate_summary(&oracle, spec.theta),
        "fixed_point": estimate_summary(&fixed, spec.theta),
    });
    w.write_file("summary.json", &json_bytes(&summary)?)?;
    Ok(())
}

fn experiment(cfg: &ExperimentConfig, w: &mut ManifestWriter) -> Res<()> {
    let spec = cfg.drift()?;
    let top = *cfg.ladder.last().expect("validated ladder");
    let setup = TwoSidedSetup { horizon: top, ..cfg.setup() };
    let plan = ExperimentPlan {
        replicates: cfg.replicates,
        chunk: cfg.chunk,
        fixed_point_replicates: if cfg.estimator == EstimatorChoice::Oracle {
            0
        } else {
            cfg.fixed_point_replicates.min(cfg.replicates)
        },
        fixed_point: FixedPointOptions { tol: 1e-8, kernel: cfg.kernel_options(), ..FixedPointOptions::default() },
        kernel: cfg.kernel_options(),
    };
    let run = consistency_experiment(&spec, &setup, &cfg.ladder, &plan)?;
    let s = &run.series;

    let mut buf = Vec::new();
    s.write_csv(&mut buf)?;
    w.write_file("series.csv", &buf)?;
    buf.clear();
    run.write_samples_csv(&mut buf)?;
    w.write_file("samples.csv", &buf)?;
    if !run.fixed_point.is_empty() {
        let mut rows = String::from("replicate,mode,theta_hat,u_t,v_t,iterations,converged\n");
        estimator_rows(&mut rows, &run.fixed_point, 0, "fixed_point");
        w.write_file("fixed_point.csv", rows.as_bytes())?;
    }

    let boxes: Vec<svg::BoxStats> = (0..s.horizons.len())
        .map(|h| {
            let est = run.oracle_estimates(h);
            svg::BoxStats {
                label: s.horizons[h],
                low: quantile(&est, 0.05),
                q25: s.summaries[h].theta_q25,
                median: s.summaries[h].theta_median,
                q75: s.summaries[h].theta_q75,
                high: quantile(&est, 0.95),
            }
        })
        .collect();
    let title = format!("{} estimates, H = {}", s.drift, s.hurst);
    w.write_file("theta_boxes.svg", svg::box_series(&title, "theta estimate", &boxes, s.theta).as_bytes())?;
    let u2: Vec<f64> = s.summaries.iter().map(|x| x.mean_u2).collect();
    let plot = svg::log_log("mean U_T^2", "log10 mean U_T^2", &s.horizons, &u2, s.slope_u2, s.reference_slope);
    w.write_file("u2_loglog.svg", plot.as_bytes())?;
    let (theta_dev, plain_dev) = deviations(cfg, &spec)?;
    write_deviations(w, &theta_dev, &plain_dev)?;

    let top_err = s.summaries.last().map_or(f64::NAN, |x| x.median_abs_error);
    let gap = run.mode_gap();
    let spread = if run.fixed_point.is_empty() {
        f64::NAN
    } else {
        iqr(&run.oracle_estimates(s.horizons.len() - 1)[..run.fixed_point.len()])
    };
    let summary = json!({
        "series": s,
        "slope": s.slope_u2,
        "reference_slope": s.reference_slope,
        "mode_gap": gap,
        "matched_oracle_iqr": spread,
        "theta_ap_deviation": theta_dev.max,
        "plain_ap_deviation": plain_dev.max,
        "pass": {
            "slope_within_0_3": s.slope_within(crate::suites::SLOPE_TOL),
            "error_strictly_decreasing": s.strictly_decreasing(),
            "top_error_below_0_05": top_err < crate::suites::CONSISTENCY_MAX_ERR,
            "modes_agree": gap < spread,
        },
    });
    w.write_file("summary.json", &json_bytes(&summary)?)?;
    Ok(())
}

fn accept(cfg: &ExperimentConfig, scale: Scale, w: &mut ManifestWriter) -> Res<()> {
    let acfg = match scale {
        Scale::Full => AcceptanceConfig::full(cfg.seed),
        Scale::Smoke => AcceptanceConfig::smoke(cfg.seed),
    };
    let mut runner = Runner::new(acfg);
    let mut io_err = None;
    let outcomes = runner.run(&cfg.suites, |table| {
        if let Err(e) = w.set_suites(table) {
            io_err.get_or_insert(e);
        }
        if let Some(o) = table.iter().rev().find(|o| o.status != SuiteStatus::NotRun) {
            eprintln!("{}", o.line());
        }
    });
    if let Some(e) = io_err {
        return Err(e.into());
    }
    let mut report = Vec::new();
    for o in &outcomes {
        writeln!(report, "{}", o.line())?;
    }
    w.write_file("acceptance.txt", &report)?;
    Ok(())
}

/// Exit status of a finished run: accept requires every suite to pass.
pub fn exit_ok(cmd: Command, manifest: &RunManifest) -> bool {
    match cmd {
        Command::Accept => manifest.all_passed(),
        _ => manifest.complete && manifest.error.is_none(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suites::SuiteOutcome;

    fn manifest(status: SuiteStatus, complete: bool) -> RunManifest {
        RunManifest {
            command: "accept".into(),
            config_hash: String::new(),
            toolkit_version: String::new(),
            started_unix: 0,
            wall_clock_seconds: 0.0,
            complete,
            error: None,
            suites: vec![SuiteOutcome {
                id: 3,
                name: "wiener shift identity".into(),
                status,
                detail: String::new(),
                metrics: Default::default(),
                seconds: 0.0,
            }],
            files: Vec::new(),
        }
    }

    #[test]
    fn exit_status_requires_every_suite() {
        assert!(exit_ok(Command::Accept, &manifest(SuiteStatus::Pass, true)));
        for s in [SuiteStatus::Fail, SuiteStatus::Blocked, SuiteStatus::NotRun] {
            assert!(!exit_ok(Command::Accept, &manifest(s, true)));
        }
        assert!(!exit_ok(Command::Accept, &manifest(SuiteStatus::Pass, false)));
        assert!(exit_ok(Command::Simulate, &manifest(SuiteStatus::NotRun, true)));
    }
}
