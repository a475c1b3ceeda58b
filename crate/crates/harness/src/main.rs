use std::path::PathBuf;
use std::process::ExitCode;

use apfbm_harness::config::ExperimentConfig;
use apfbm_harness::runs::{exit_ok, output_dir, run, Command, Scale};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "apfbm", version, about = "Almost periodic fBm-driven SDEs: simulation, diagnostics and drift estimation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// TOML config; defaults apply to missing keys and to a missing file.
    #[arg(short, long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate the two-sided solution and write the paths.
    Simulate(Common),
    /// Compare θ-translations and plain translations of the solution.
    TranslateCheck(Common),
    /// Mean value and spectrum of E(X − b₀)².
    ApScan(Common),
    /// Oracle and fixed-point drift estimates at the configured horizon.
    Estimate(Common),
    /// Consistency experiment over the horizon ladder, with plots.
    Experiment(Common),
    /// Run acceptance suites; exits non-zero unless all requested suites pass.
    Accept {
        #[command(flatten)]
        common: Common,
        /// Comma-separated suite ids; overrides `suites` in the config.
        #[arg(long, value_delimiter = ',')]
        suites: Option<Vec<u8>>,
        #[arg(long, value_enum, default_value_t = ScaleArg::Full)]
        scale: ScaleArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Full,
    Smoke,
}

fn load(common: &Common) -> Result<ExperimentConfig, String> {
    match &common.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| e.to_string()),
        None => {
            let mut cfg = ExperimentConfig::default();
            cfg.apply_env(|k| std::env::var(k).ok()).map_err(|e| e.to_string())?;
            Ok(cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common, suites, scale) = match &cli.command {
        Cmd::Simulate(c) => (Command::Simulate, c, None, Scale::Full),
        Cmd::TranslateCheck(c) => (Command::TranslateCheck, c, None, Scale::Full),
        Cmd::ApScan(c) => (Command::ApScan, c, None, Scale::Full),
        Cmd::Estimate(c) => (Command::Estimate, c, None, Scale::Full),
        Cmd::Experiment(c) => (Command::Experiment, c, None, Scale::Full),
        Cmd::Accept { common, suites, scale } => (
            Command::Accept,
            common,
            suites.clone(),
            match scale {
                ScaleArg::Full => Scale::Full,
                ScaleArg::Smoke => Scale::Smoke,
            },
        ),
    };
    let mut cfg = match load(common) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    if let Some(s) = suites {
        cfg.suites = s;
    }
    match run(cmd, &cfg, scale) {
        Ok(manifest) => {
            println!("{}", output_dir(&cfg, cmd).display());
            if exit_ok(cmd, &manifest) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}
