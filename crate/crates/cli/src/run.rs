//! Single runs, κ-sweeps and figure-data export.

use std::path::Path;

use batchelor_core::diagnostics::{batchelor_fit, power_spectrum, BatchelorFit};
use batchelor_core::integrators::{simulate, solver_grid_size, RunSummary};
use batchelor_core::io::{write_grid_csv, write_heatmap_csv, write_pgm, write_shell_csv, NdjsonWriter};
use batchelor_core::spectral::{to_physical, Aliasing};
use batchelor_core::stats::mean_stderr;
use batchelor_core::SpectralField;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{OutputDir, RunManifest};

/// `summary.json`: the run summary stamped with the config hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub config_hash: String,
    #[serde(flatten)]
    pub summary: RunSummary,
}

pub struct RunOutcome {
    pub summary: RunSummary,
    pub final_field: SpectralField,
    pub manifest: RunManifest,
    pub out: OutputDir,
}

/// Simulates one configuration into `out` and writes its manifest. A zero
/// horizon writes only the initial snapshot and the manifest.
pub fn execute_run(cfg: &RunConfig, mut out: OutputDir) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let spec = cfg.model_spec()?;
    let plan = cfg.step_plan()?;
    let f0 = cfg.initial_condition().build(spec.dimension, spec.cutoff)?;
    let sim = simulate(&f0, &spec, &plan, cfg.run.horizon, &cfg.schedule(true))?;

    for (i, snap) in sim.snapshots.iter().enumerate() {
        out.write_with(&format!("snapshots/snap_{i:04}.csv"), "snapshot-spectral", |w| snap.field.write_csv(w))?;
        if let Some(g) = &snap.grid {
            out.write_with(&format!("snapshots/snap_{i:04}.pgm"), "snapshot-pgm", |w| write_pgm(g, w))?;
        }
    }
    let summary = sim.summary(&spec, plan.seed, cfg.gamma_window());
    let file = SummaryFile { config_hash: cfg.hash(), summary: summary.clone() };
    if sim.steps > 0 {
        out.write_with("diagnostics.ndjson", "diagnostics", |w| {
            let mut nd = NdjsonWriter::new(w);
            for r in &sim.records {
                nd.write(r)?;
            }
            nd.into_inner().map(|_| ())
        })?;
        out.write_json("summary.json", "summary", &file)?;
    }
    let summary_value = serde_json::to_value(&file).expect("summary serializes");
    let (manifest, out) = out.finish("run", cfg, plan.seed, summary_value)?;
    Ok(RunOutcome { summary, final_field: sim.final_field, manifest, out })
}

pub fn cmd_run(cfg: &RunConfig, out_dir: &Path) -> Result<RunManifest, CliError> {
    Ok(execute_run(cfg, OutputDir::create(out_dir)?)?.manifest)
}

/// Grid snapshot matrix, log-power heatmap and shell spectrum of `f`.
pub fn write_figure_data(out: &mut OutputDir, prefix: &str, f: &SpectralField) -> Result<(), CliError> {
    let grid = to_physical(f, solver_grid_size(f.cutoff(), 2), Aliasing::Forbid)?;
    out.write_with(&format!("{prefix}grid.csv"), "figure-grid", |w| write_grid_csv(&grid, w))?;
    out.write_with(&format!("{prefix}heatmap.csv"), "figure-heatmap", |w| write_heatmap_csv(f, w))?;
    let profile = power_spectrum(f);
    out.write_with(&format!("{prefix}shells.csv"), "figure-shells", |w| write_shell_csv(&profile, w))?;
    Ok(())
}

/// Figure data from the final snapshot of a finished run directory.
pub fn cmd_export_figure_data(from: &Path, out_dir: &Path) -> Result<RunManifest, CliError> {
    let source = RunManifest::read(from)?;
    let entry = source
        .last_of_kind("snapshot-spectral")
        .ok_or_else(|| CliError::Config(format!("{} lists no spectral snapshot", from.display())))?;
    let file = std::fs::File::open(from.join(&entry.path))?;
    let field = SpectralField::read_csv(std::io::BufReader::new(file), Some(source.config.model.cutoff))?;
    let mut out = OutputDir::create(out_dir)?;
    write_figure_data(&mut out, "", &field)?;
    let summary = serde_json::json!({
        "source_config_hash": source.config_hash,
        "snapshot": entry.path,
        "kappa": source.config.model.kappa,
        "batchelor_radius": batchelor_radius(source.config.model.kappa),
    });
    Ok(out.finish("export-figure-data", &source.config, source.seed, summary)?.0)
}

/// `10 κ^{-1/2}`, undefined for κ = 0.
pub fn batchelor_radius(kappa: f64) -> Option<f64> {
    (kappa > 0.0).then(|| 10.0 / kappa.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MeanStderr {
    pub fn of(values: &[f64]) -> Option<MeanStderr> {
        mean_stderr(values).map(|(mean, stderr)| MeanStderr { mean, stderr, n: values.len() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberReport {
    pub seed: u64,
    pub dir: String,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberFailure {
    pub kappa: f64,
    pub seed: u64,
    pub error: String,
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub kappa: f64,
    pub cutoff: usize,
    pub dt: f64,
    pub ensemble: usize,
    pub members: Vec<MemberReport>,
    pub ell_mean: Option<MeanStderr>,
    pub spectrum_radius_95: Option<MeanStderr>,
    pub rate_global: Option<MeanStderr>,
    pub rate_limsup_proxy: Option<MeanStderr>,
    pub batchelor_radius: Option<f64>,
    pub figure_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// `(κ, mean ℓ)` for every group with κ > 0 and a defined ℓ.
    pub points: Vec<(f64, f64)>,
    pub fit: Option<BatchelorFit>,
    /// Fewer than three distinct κ: the exponent is not meaningful.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config_hash: String,
    pub groups: Vec<GroupReport>,
    pub fit: FitReport,
    pub failures: Vec<MemberFailure>,
}

fn kappa_dir(kappa: f64) -> String {
    format!("kappa_{kappa}")
}

struct Job {
    group: usize,
    cfg: RunConfig,
    dir: String,
}

type MemberResult = Result<(MemberReport, SpectralField, OutputDir), MemberFailure>;

fn run_member(root: &OutputDir, job: &Job) -> MemberResult {
    let fail = |e: CliError| MemberFailure {
        kappa: job.cfg.model.kappa,
        seed: job.cfg.plan.seed,
        exit_code: e.exit_code(),
        error: e.to_string(),
    };
    let child = root.child(&job.dir).map_err(fail)?;
    let outcome = execute_run(&job.cfg, child).map_err(fail)?;
    let report = MemberReport { seed: job.cfg.plan.seed, dir: job.dir.clone(), summary: outcome.summary };
    Ok((report, outcome.final_field, outcome.out))
}

/// Runs `ensemble` seeds per κ on up to `threads` workers, then reduces
/// the member summaries on one thread. Failed members are listed in the
/// report and turn the command into an error after everything is written.
pub fn cmd_sweep(cfg: &RunConfig, out_dir: &Path, threads: usize) -> Result<(SweepReport, RunManifest), CliError> {
    cfg.validate()?;
    let kappas = &cfg.sweep.kappas;
    if kappas.is_empty() {
        return Err(CliError::Config("sweep.kappas is empty".into()));
    }
    if cfg.sweep.ensemble == 0 {
        return Err(CliError::Config("sweep.ensemble must be ≥ 1".into()));
    }
    let mut groups = Vec::new();
    let mut jobs = Vec::new();
    for (g, &kappa) in kappas.iter().enumerate() {
        let (base, ensemble) = cfg.for_kappa(kappa);
        base.validate()?;
        for e in 0..ensemble {
            let mut c = base.clone();
            c.plan.seed = cfg.plan.seed + e as u64;
            c.output_dir = None;
            jobs.push(Job { group: g, dir: format!("{}/seed_{}", kappa_dir(kappa), c.plan.seed), cfg: c });
        }
        groups.push((base, ensemble));
    }

    let mut out = OutputDir::create(out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CliError::Other(e.to_string()))?;
    let results: Vec<MemberResult> = pool.install(|| jobs.par_iter().map(|j| run_member(&out, j)).collect());

    let mut members: Vec<Vec<(MemberReport, Option<SpectralField>)>> = vec![Vec::new(); groups.len()];
    let mut failures = Vec::new();
    for (job, result) in jobs.iter().zip(results) {
        match result {
            Ok((report, field, child)) => {
                out.adopt(&job.dir, child);
                let keep = members[job.group].is_empty().then_some(field);
                members[job.group].push((report, keep));
            }
            Err(f) => failures.push(f),
        }
    }

    let mut reports = Vec::new();
    for (g, ((base, ensemble), done)) in groups.iter().zip(members).enumerate() {
        let kappa = kappas[g];
        let collect = |get: fn(&RunSummary) -> Option<f64>| -> Option<MeanStderr> {
            let v: Vec<f64> = done.iter().filter_map(|(m, _)| get(&m.summary)).collect();
            MeanStderr::of(&v)
        };
        let ell_mean = collect(|s| s.ell_mean);
        let spectrum_radius_95 = collect(|s| s.spectrum_radius_95);
        let rate_global = collect(|s| s.rate_global);
        let rate_limsup_proxy = collect(|s| s.rate_limsup_proxy);
        let figure_dir = match done.first() {
            Some((_, Some(field))) => {
                let prefix = format!("{}/figure/", kappa_dir(kappa));
                write_figure_data(&mut out, &prefix, field)?;
                Some(prefix.trim_end_matches('/').to_string())
            }
            _ => None,
        };
        reports.push(GroupReport {
            kappa,
            cutoff: base.model.cutoff,
            dt: base.plan.dt,
            ensemble: *ensemble,
            members: done.into_iter().map(|(m, _)| m).collect(),
            ell_mean,
            spectrum_radius_95,
            rate_global,
            rate_limsup_proxy,
            batchelor_radius: batchelor_radius(kappa),
            figure_dir,
        });
    }

    let points: Vec<(f64, f64)> =
        reports.iter().filter(|g| g.kappa > 0.0).filter_map(|g| g.ell_mean.map(|e| (g.kappa, e.mean))).collect();
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let fit = FitReport { fit: batchelor_fit(&points).ok(), degenerate: distinct.len() < 3, points };

    let report = SweepReport { config_hash: cfg.hash(), groups: reports, fit, failures };
    out.write_json("sweep.json", "sweep", &report)?;
    let summary = serde_json::to_value(&report.fit).expect("fit serializes");
    let (manifest, _) = out.finish("sweep", cfg, cfg.plan.seed, summary)?;
    if let Some(worst) = report.failures.iter().max_by_key(|f| f.exit_code) {
        let seeds: Vec<String> = report.failures.iter().map(|f| format!("κ={} seed={}", f.kappa, f.seed)).collect();
        let msg = format!("{} member(s) failed: {}", seeds.len(), seeds.join(", "));
        return Err(if worst.exit_code == 3 { CliError::Numerical(msg) } else { CliError::Other(msg) });
    }
    Ok((report, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::InitialConfig;

    fn tiny() -> RunConfig {
        let mut c = RunConfig::preset("desk").unwrap();
        c.model.cutoff = 8;
        c.plan.dt = 1e-3;
        c.run.horizon = 0.05;
        c.run.diag_every = 5;
        c.sweep.ensemble = 2;
        c.initial = InitialConfig::RandomShell { radius: 2, seed: None };
        c
    }

    #[test]
    fn batchelor_radius_examples() {
        assert!((batchelor_radius(0.04).unwrap() - 50.0).abs() < 1e-12);
        assert!((batchelor_radius(1.0).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(batchelor_radius(0.0), None);
    }

    #[test]
    fn run_writes_inventory() {
        let tmp = tempfile::tempdir().unwrap();
        let m = cmd_run(&tiny(), tmp.path()).unwrap();
        let kinds: Vec<&str> = m.files.iter().map(|f| f.kind.as_str()).collect();
        assert_eq!(
            kinds,
            ["snapshot-spectral", "snapshot-pgm", "snapshot-spectral", "snapshot-pgm", "diagnostics", "summary"]
        );
        for f in &m.files {
            assert_eq!(std::fs::metadata(tmp.path().join(&f.path)).unwrap().len(), f.bytes);
        }
        assert_eq!(m.summary["config_hash"], serde_json::json!(tiny().hash()));
    }

    #[test]
    fn sweep_groups_and_figures() {
        let tmp = tempfile::tempdir().unwrap();
        let (report, manifest) = cmd_sweep(&tiny(), tmp.path(), 2).unwrap();
        assert_eq!(report.groups.len(), 3);
        assert!(!report.fit.degenerate);
        assert!(report.fit.fit.is_some());
        for g in &report.groups {
            assert_eq!(g.members.len(), 2);
            assert_eq!(g.ell_mean.unwrap().n, 2);
            let fig = g.figure_dir.as_ref().unwrap();
            assert!(tmp.path().join(fig).join("heatmap.csv").exists());
        }
        assert!(manifest.files.iter().any(|f| f.path == "kappa_0.04/seed_2/manifest.json"));
        let mut c = tiny();
        c.sweep.kappas = vec![0.01];
        let (single, _) = cmd_sweep(&c, &tmp.path().join("single"), 1).unwrap();
        assert!(single.fit.degenerate);
        assert!(single.fit.fit.is_none());
        c.sweep.kappas.clear();
        assert!(matches!(cmd_sweep(&c, &tmp.path().join("empty"), 1), Err(CliError::Config(_))));
    }

    #[test]
    fn export_reads_the_final_snapshot() {
        let tmp = tempfile::tempdir().unwrap();
        cmd_run(&tiny(), &tmp.path().join("run")).unwrap();
        let m = cmd_export_figure_data(&tmp.path().join("run"), &tmp.path().join("fig")).unwrap();
        let names: Vec<&str> = m.files.iter().map(|f| f.path.as_str()).collect();
        assert_eq!(names, ["grid.csv", "heatmap.csv", "shells.csv"]);
        assert!(cmd_export_figure_data(&tmp.path().join("nothing"), &tmp.path().join("f2")).is_err());
    }
}
