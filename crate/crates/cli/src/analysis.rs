//! Structural checks, Lagrangian estimates and mixing-rate ensembles.

use std::f64::consts::PI;
use std::path::Path;

use batchelor_core::diagnostics::gamma_s_estimate;
use batchelor_core::integrators::{simulate, Schedule};
use batchelor_core::io::write_trajectory_csv;
use batchelor_core::lagrangian::{
    lyapunov_estimate, one_point_displacements, one_point_variance_rate, trajectory, LyapunovEstimate,
};
use batchelor_core::stats::mean_stderr;
use batchelor_core::theory::{mixing_rate_cap, mixing_rate_transfer, run_suite, CheckReport};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{OutputDir, RunManifest};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckSuiteReport {
    pub config_hash: String,
    pub passed: bool,
    pub checks: Vec<CheckReport>,
}

/// Runs the structural suite; any failing check is an error carrying the
/// serialized counterexamples, after the report has been written.
pub fn cmd_check(cfg: &RunConfig, out_dir: &Path) -> Result<(CheckSuiteReport, RunManifest), CliError> {
    cfg.validate()?;
    let checks = run_suite(&cfg.suite_config());
    let report = CheckSuiteReport { config_hash: cfg.hash(), passed: checks.iter().all(|c| c.passed()), checks };
    let mut out = OutputDir::create(out_dir)?;
    out.write_json("check_report.json", "check-report", &report)?;
    let summary = serde_json::json!({
        "passed": report.passed,
        "checks": report.checks.iter().map(|c| (c.check.clone(), c.passed())).collect::<std::collections::BTreeMap<_, _>>(),
    });
    let (manifest, _) = out.finish("check", cfg, cfg.check.seed, summary)?;
    if !report.passed {
        let dump: Vec<String> = report
            .checks
            .iter()
            .filter(|c| !c.passed())
            .map(|c| {
                format!(
                    "{}: {} of {} trials failed, worst margin {:e}, counterexample {}",
                    c.check,
                    c.failures,
                    c.trials,
                    c.worst_margin,
                    c.counterexample.as_ref().map_or("none".into(), |v| v.to_string())
                )
            })
            .collect();
        return Err(CliError::CheckFailed(dump.join("\n")));
    }
    Ok((report, manifest))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceCheck {
    pub variance: f64,
    pub stderr: f64,
    pub expected: f64,
    pub pass: bool,
}

/// Sample variance of `values` with the standard error of that estimate
/// and whether it matches `expected` within three standard errors.
pub fn variance_check(values: &[f64], expected: f64) -> Option<VarianceCheck> {
    let (mean, _) = mean_stderr(values)?;
    let sq: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let (variance, stderr) = mean_stderr(&sq)?;
    let n = values.len() as f64;
    let variance = variance * n / (n - 1.0).max(1.0);
    Some(VarianceCheck { variance, stderr, expected, pass: (variance - expected).abs() <= 3.0 * stderr })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapRow {
    pub s: f64,
    pub cap: f64,
    pub cap_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LagrangianReport {
    pub config_hash: String,
    pub lyapunov: LyapunovEstimate,
    /// Mean exponent more than three standard errors above zero.
    pub lambda_positive: bool,
    pub one_point_horizon: f64,
    pub one_point_variance: Vec<VarianceCheck>,
    pub det_jacobian_max_deviation: f64,
    /// `Λ̂·s` from the mean exponent.
    pub cap_table: Vec<CapRow>,
}

pub fn lagrangian_report(cfg: &RunConfig) -> Result<LagrangianReport, CliError> {
    cfg.validate()?;
    let dim = cfg.dimension()?;
    let l = &cfg.lagrangian;
    let seed = cfg.plan.seed;
    let lyapunov = lyapunov_estimate(dim, l.particles, l.horizon, l.dt, seed)?;
    let disp = one_point_displacements(dim, l.one_point_particles, l.one_point_horizon, l.one_point_dt, seed)?;
    let one_point_variance = (0..dim.get())
        .map(|a| {
            let v: Vec<f64> = disp.iter().map(|d| d[a]).collect();
            variance_check(&v, one_point_variance_rate(dim) * l.one_point_horizon)
                .ok_or_else(|| CliError::Config("one-point variance needs at least two particles".into()))
        })
        .collect::<Result<_, _>>()?;
    let cap_table = l
        .s_values
        .iter()
        .map(|&s| Ok(CapRow { s, cap: mixing_rate_cap(lyapunov.mean.max(0.0), s)?, cap_stderr: lyapunov.stderr * s }))
        .collect::<Result<_, CliError>>()?;
    Ok(LagrangianReport {
        config_hash: cfg.hash(),
        lambda_positive: lyapunov.mean - 3.0 * lyapunov.stderr > 0.0,
        det_jacobian_max_deviation: lyapunov.max_log_det.exp_m1().abs(),
        lyapunov,
        one_point_horizon: l.one_point_horizon,
        one_point_variance,
        cap_table,
    })
}

pub fn cmd_lagrangian(cfg: &RunConfig, out_dir: &Path) -> Result<(LagrangianReport, RunManifest), CliError> {
    let report = lagrangian_report(cfg)?;
    let dim = cfg.dimension()?;
    let l = &cfg.lagrangian;
    let start = vec![0.1; dim.get()];
    let records = trajectory(dim, &start, l.horizon, l.dt, cfg.plan.seed, l.trajectory_every.max(1))?;
    let mut out = OutputDir::create(out_dir)?;
    out.write_json("lagrangian.json", "lagrangian", &report)?;
    out.write_with("trajectory.csv", "trajectory", |w| write_trajectory_csv(dim, &records, w))?;
    let summary = serde_json::to_value(&report).expect("report serializes");
    let (manifest, _) = out.finish("lagrangian", cfg, cfg.plan.seed, summary)?;
    Ok((report, manifest))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaRow {
    pub s: f64,
    /// Ensemble mean of the per-seed rates and its standard error.
    pub gamma: f64,
    pub stderr: f64,
    /// Below the cap `2π²` within three standard errors.
    pub below_cap: bool,
    /// `mixing_rate_transfer(1, γ̂₁, s)` for `s < 1`, when `s = 1` is on the grid.
    pub transfer_bound: Option<f64>,
    pub above_transfer: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    pub config_hash: String,
    pub window: [f64; 2],
    pub seeds: Vec<u64>,
    /// Per-seed rates, one row per `s`.
    pub per_seed: Vec<Vec<f64>>,
    pub rows: Vec<GammaRow>,
    /// Nondecreasing in `s` within two combined standard errors.
    pub monotone: bool,
    pub cap: f64,
    pub passed: bool,
}

/// Mixing-rate ensemble for the transport equation. Each seed gives one
/// windowed slope per `s`; rows report the mean and its standard error.
pub fn mixing_report(cfg: &RunConfig, threads: usize) -> Result<MixingReport, CliError> {
    cfg.validate()?;
    if cfg.model.kappa != 0.0 {
        return Err(CliError::Config(format!(
            "mixing rates are defined for κ = 0, config has κ = {}",
            cfg.model.kappa
        )));
    }
    let s_values = cfg.mixing.s_values.clone();
    if s_values.is_empty() || cfg.mixing.ensemble == 0 {
        return Err(CliError::Config("mixing needs a non-empty s grid and ensemble ≥ 1".into()));
    }
    let spec = cfg.model_spec()?;
    let window = cfg.mixing.window.or(cfg.run.gamma_window).unwrap_or([0.0, cfg.run.horizon]);
    let f0 = cfg.initial_condition().build(spec.dimension, spec.cutoff)?;
    let seeds: Vec<u64> = (0..cfg.mixing.ensemble as u64).map(|e| cfg.plan.seed + e).collect();
    let schedule = Schedule {
        diag_every: cfg.run.diag_every,
        s_values: s_values.clone(),
        snapshot_every: 0,
        snapshot_grid: false,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CliError::Other(e.to_string()))?;
    let runs: Vec<Result<Vec<f64>, CliError>> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let mut c = cfg.clone();
                c.plan.seed = seed;
                let plan = c.step_plan()?;
                let f0 = match c.initial {
                    crate::config::InitialConfig::CosX => f0.clone(),
                    _ => c.initial_condition().build(spec.dimension, spec.cutoff)?,
                };
                let sim = simulate(&f0, &spec, &plan, cfg.run.horizon, &schedule)?;
                sim.h_minus_s
                    .iter()
                    .map(|(s, series)| Ok(gamma_s_estimate(series, *s, window[0], window[1])?.rate))
                    .collect()
            })
            .collect()
    });
    let per_seed: Vec<Vec<f64>> = runs.into_iter().collect::<Result<_, _>>()?;
    let by_s: Vec<Vec<f64>> = (0..s_values.len()).map(|i| per_seed.iter().map(|r| r[i]).collect()).collect();
    let stats: Vec<(f64, f64)> = by_s.iter().map(|v| mean_stderr(v).expect("ensemble ≥ 1")).collect();

    let cap = 2.0 * PI * PI;
    let one = s_values.iter().position(|&s| s == 1.0).map(|i| stats[i]);
    let mut rows = Vec::new();
    for (i, &s) in s_values.iter().enumerate() {
        let (gamma, stderr) = stats[i];
        let (transfer_bound, above_transfer) = match one {
            Some((g1, se1)) if s < 1.0 && g1 > 0.0 => {
                let bound = mixing_rate_transfer(1.0, g1, s)?;
                let c = bound / g1;
                let se = (stderr.powi(2) + (c * se1).powi(2)).sqrt();
                (Some(bound), Some(gamma >= bound - 3.0 * se))
            }
            _ => (None, None),
        };
        rows.push(GammaRow {
            s,
            gamma,
            stderr,
            below_cap: gamma <= cap + 3.0 * stderr,
            transfer_bound,
            above_transfer,
        });
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[a].s.total_cmp(&rows[b].s));
    let monotone = order.windows(2).all(|w| {
        let (a, b) = (&rows[w[0]], &rows[w[1]]);
        b.gamma >= a.gamma - 2.0 * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt()
    });
    let passed = monotone && rows.iter().all(|r| r.below_cap && r.above_transfer != Some(false));
    Ok(MixingReport { config_hash: cfg.hash(), window, seeds, per_seed: by_s, rows, monotone, cap, passed })
}

pub fn cmd_mixing(cfg: &RunConfig, out_dir: &Path, threads: usize) -> Result<(MixingReport, RunManifest), CliError> {
    let report = mixing_report(cfg, threads)?;
    let mut out = OutputDir::create(out_dir)?;
    out.write_json("mixing.json", "mixing", &report)?;
    let summary = serde_json::to_value(&report.rows).expect("rows serialize");
    let (manifest, _) = out.finish("mixing", cfg, cfg.plan.seed, summary)?;
    Ok((report, manifest))
}
