//! Experiment driver: reproducible runs, κ-sweeps, structural checks,
//! Lagrangian and mixing-rate ensembles, each writing a manifest that ties
//! every output file to the config that produced it.

// `!(x > 0.0)` is used on purpose so that NaN is rejected with the bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod error;
pub mod output;
pub mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;
pub use error::CliError;

pub const THREADS_ENV: &str = "BATCHELOR_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "batchelor-lab", version, about = "Shear-flow passive scalar experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML config, or a manifest.json to replay.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Named preset: desk, full, mixing, smoke-3d.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// Output directory (overrides the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base seed (overrides the config).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for ensembles.
    #[arg(long)]
    pub parallel: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one configuration.
    Run(Common),
    /// Ensembles over a list of diffusivities.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated κ values (overrides the config).
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        kappas: Option<Vec<f64>>,
        #[arg(long)]
        ensemble: Option<usize>,
    },
    /// Structural checks of the drift, norms, adjacency and interpolation.
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        field_trials: Option<u64>,
        #[arg(long)]
        max_cutoff: Option<usize>,
    },
    /// Inverse-Jacobian growth and one-point motion.
    Lagrangian(Common),
    /// Mixing rates of the transport equation over an s grid.
    Mixing {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        s_values: Option<Vec<f64>>,
    },
    /// Figure CSVs from the final snapshot of a finished run.
    ExportFigureData {
        /// Run directory holding a manifest.json.
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Worker count: `--parallel` (default: available cores), capped by the
/// environment variable.
pub fn thread_count(parallel: Option<usize>) -> Result<usize, CliError> {
    let base = parallel.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let cap = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?,
        Err(_) => usize::MAX,
    };
    Ok(base.min(cap).max(1))
}

fn resolve(common: &Common, default_preset: &str) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = match (&common.config, &common.preset) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(name)) => RunConfig::preset(name)?,
        (None, None) => RunConfig::preset(default_preset)?,
    };
    if let Some(seed) = common.seed {
        cfg.plan.seed = seed;
        cfg.check.seed = seed;
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set output_dir".into()))?;
    cfg.output_dir = Some(out.clone());
    cfg.validate()?;
    Ok((cfg, out))
}

/// Executes a parsed command and returns a one-line report for stdout.
pub fn execute(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Run(common) => {
            let (cfg, out) = resolve(&common, "desk")?;
            let m = run::cmd_run(&cfg, &out)?;
            Ok(format!("run complete: {} files, config {}", m.files.len(), m.config_hash))
        }
        Command::Sweep { common, kappas, ensemble } => {
            let (mut cfg, out) = resolve(&common, "desk")?;
            if let Some(k) = kappas {
                cfg.sweep.kappas = k;
            }
            if let Some(e) = ensemble {
                cfg.sweep.ensemble = e;
            }
            let (report, _) = run::cmd_sweep(&cfg, &out, thread_count(common.parallel)?)?;
            Ok(match (report.fit.fit, report.fit.degenerate) {
                (Some(f), false) => format!("sweep complete: ℓ ∝ κ^{:.3} (± {:.3})", f.exponent, f.exponent_stderr),
                _ => "sweep complete: fit degenerate (fewer than three κ)".to_string(),
            })
        }
        Command::Check { common, trials, field_trials, max_cutoff } => {
            let (mut cfg, out) = resolve(&common, "desk")?;
            if let Some(t) = trials {
                cfg.check.trials = t;
            }
            if let Some(t) = field_trials {
                cfg.check.field_trials = t;
            }
            if let Some(n) = max_cutoff {
                cfg.check.max_cutoff = n;
            }
            cfg.validate()?;
            let (report, _) = analysis::cmd_check(&cfg, &out)?;
            Ok(format!("check passed: {} checks", report.checks.len()))
        }
        Command::Lagrangian(common) => {
            let (cfg, out) = resolve(&common, "desk")?;
            let (r, _) = analysis::cmd_lagrangian(&cfg, &out)?;
            Ok(format!(
                "lagrangian complete: Λ̂ = {:.4} ± {:.4} (max {:.4}), positive: {}",
                r.lyapunov.mean, r.lyapunov.stderr, r.lyapunov.lambda, r.lambda_positive
            ))
        }
        Command::Mixing { common, s_values } => {
            let (mut cfg, out) = resolve(&common, "mixing")?;
            if let Some(s) = s_values {
                cfg.mixing.s_values = s;
            }
            cfg.validate()?;
            let (r, _) = analysis::cmd_mixing(&cfg, &out, thread_count(common.parallel)?)?;
            let rates: Vec<String> = r.rows.iter().map(|row| format!("γ_{}={:.3}", row.s, row.gamma)).collect();
            Ok(format!("mixing complete: {} (shape checks passed: {})", rates.join(" "), r.passed))
        }
        Command::ExportFigureData { from, out } => {
            let m = run::cmd_export_figure_data(&from, &out)?;
            Ok(format!("exported {} figure files", m.files.len()))
        }
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(line) => {
            println!("{line}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
