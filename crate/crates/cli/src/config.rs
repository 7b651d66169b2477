//! Run configuration: a versioned TOML schema, named presets and the
//! content hash embedded in every output.

use std::path::{Path, PathBuf};

use batchelor_core::initial::InitialCondition;
use batchelor_core::integrators::{Schedule, Scheme, StepPlan};
use batchelor_core::models::ModelSpec;
use batchelor_core::theory::{Mutation, SuiteConfig};
use batchelor_core::Dimension;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub model: ModelConfig,
    pub initial: InitialConfig,
    pub plan: PlanConfig,
    pub run: RunSection,
    /// Where outputs go; `--out` overrides it. Not part of the hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub lagrangian: LagrangianConfig,
    #[serde(default)]
    pub mixing: MixingConfig,
    #[serde(default)]
    pub check: CheckConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub dimension: u8,
    pub kappa: f64,
    pub cutoff: usize,
}

/// Initial condition preset. A random shell without an explicit seed
/// follows the plan seed, so ensemble members differ in both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialConfig {
    CosX,
    RandomShell {
        radius: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub dt: f64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_grid_factor")]
    pub grid_factor: usize,
    #[serde(default = "default_one")]
    pub fine_per_step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub horizon: f64,
    /// Diagnostic cadence in steps.
    #[serde(default = "default_diag_every")]
    pub diag_every: u64,
    #[serde(default)]
    pub s_values: Vec<f64>,
    /// Snapshot cadence in steps; 0 keeps the initial and final states.
    #[serde(default)]
    pub snapshot_every: u64,
    /// Fit window `[t0, t1]` for the mixing rates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_window: Option<[f64; 2]>,
}

/// Per-κ resolution changes inside a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepOverride {
    pub kappa: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub kappas: Vec<f64>,
    pub ensemble: usize,
    pub overrides: Vec<SweepOverride>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { kappas: vec![0.04, 0.01, 0.0025], ensemble: 8, overrides: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LagrangianConfig {
    pub particles: usize,
    pub horizon: f64,
    pub dt: f64,
    pub one_point_particles: usize,
    pub one_point_horizon: f64,
    pub one_point_dt: f64,
    /// Regularities for the cap table `Λ̂·s`.
    pub s_values: Vec<f64>,
    /// Trajectory sampling cadence in steps for the first particle.
    pub trajectory_every: u64,
}

impl Default for LagrangianConfig {
    fn default() -> Self {
        LagrangianConfig {
            particles: 1000,
            horizon: 50.0,
            dt: 1e-3,
            one_point_particles: 100_000,
            one_point_horizon: 1.0,
            one_point_dt: 1e-2,
            s_values: vec![0.5, 1.0, 2.0],
            trajectory_every: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixingConfig {
    pub s_values: Vec<f64>,
    pub ensemble: usize,
    /// Fit window; defaults to the whole horizon.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
}

impl Default for MixingConfig {
    fn default() -> Self {
        MixingConfig { s_values: vec![0.25, 0.5, 1.0, 2.0, 4.0], ensemble: 16, window: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub trials: u64,
    pub field_trials: u64,
    pub max_cutoff: usize,
    pub seed: u64,
    /// Test-harness corruption of the noise matrix.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mutation: Option<Mutation>,
}

impl Default for CheckConfig {
    fn default() -> Self {
        let d = SuiteConfig::default();
        CheckConfig {
            trials: d.trials,
            field_trials: d.field_trials,
            max_cutoff: d.max_cutoff,
            seed: d.seed,
            mutation: None,
        }
    }
}

fn default_scheme() -> Scheme {
    Scheme::Splitting
}
fn default_grid_factor() -> usize {
    2
}
fn default_one() -> u64 {
    1
}
fn default_diag_every() -> u64 {
    50
}

/// Named presets. `desk` is the κ-sweep at N=64; `full` adds the N=256
/// resolution for the smallest κ and runs for a long time.
pub const PRESETS: [&str; 4] = ["desk", "full", "mixing", "smoke-3d"];

impl RunConfig {
    pub fn preset(name: &str) -> Result<RunConfig, CliError> {
        let desk = RunConfig {
            schema_version: SCHEMA_VERSION,
            model: ModelConfig { dimension: 2, kappa: 0.01, cutoff: 64 },
            initial: InitialConfig::RandomShell { radius: 2, seed: None },
            plan: PlanConfig { dt: 2e-4, scheme: Scheme::Splitting, seed: 1, grid_factor: 2, fine_per_step: 1 },
            run: RunSection {
                horizon: 20.0,
                diag_every: 50,
                s_values: Vec::new(),
                snapshot_every: 0,
                gamma_window: None,
            },
            output_dir: None,
            sweep: SweepConfig::default(),
            lagrangian: LagrangianConfig::default(),
            mixing: MixingConfig::default(),
            check: CheckConfig::default(),
        };
        match name {
            "desk" => Ok(desk),
            "full" => {
                let mut c = desk;
                c.sweep.overrides.push(SweepOverride { kappa: 0.0025, cutoff: Some(256), dt: None, ensemble: Some(1) });
                Ok(c)
            }
            "mixing" => {
                let mut c = desk;
                c.model = ModelConfig { dimension: 2, kappa: 0.0, cutoff: 128 };
                c.initial = InitialConfig::CosX;
                c.plan.dt = 1e-4;
                c.run.horizon = 0.4;
                c.run.diag_every = 20;
                c.run.s_values = MixingConfig::default().s_values;
                Ok(c)
            }
            "smoke-3d" => {
                let mut c = desk;
                c.model = ModelConfig { dimension: 3, kappa: 0.01, cutoff: 16 };
                c.plan.dt = 1e-3;
                c.run.horizon = 5.0;
                c.run.diag_every = 10;
                Ok(c)
            }
            other => Err(CliError::Config(format!("unknown preset {other:?}; expected one of {}", PRESETS.join(", ")))),
        }
    }

    /// Reads a TOML config, or the config embedded in a manifest JSON.
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg = if path.extension().is_some_and(|e| e == "json") {
            #[derive(Deserialize)]
            struct Embedded {
                config: RunConfig,
            }
            serde_json::from_str::<Embedded>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
                .config
        } else {
            Self::parse(&text).map_err(|e| match e {
                CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
                other => other,
            })?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<RunConfig, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config always serializes")
    }

    pub fn dimension(&self) -> Result<Dimension, CliError> {
        Dimension::try_from(self.model.dimension).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn model_spec(&self) -> Result<ModelSpec, CliError> {
        ModelSpec::new(self.dimension()?, self.model.kappa, self.model.cutoff)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn step_plan(&self) -> Result<StepPlan, CliError> {
        let spec = self.model_spec()?;
        let plan = StepPlan {
            dt: self.plan.dt,
            scheme: self.plan.scheme,
            seed: self.plan.seed,
            pair_order: (0..spec.pairs().len()).collect(),
            grid_factor: self.plan.grid_factor,
            fine_per_step: self.plan.fine_per_step,
        };
        plan.validate(&spec).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(plan)
    }

    pub fn initial_condition(&self) -> InitialCondition {
        match self.initial {
            InitialConfig::CosX => InitialCondition::CosX,
            InitialConfig::RandomShell { radius, seed } => {
                InitialCondition::RandomShell { radius, seed: seed.unwrap_or(self.plan.seed) }
            }
        }
    }

    /// Steps between diagnostics and snapshots, plus the recorded `s`.
    pub fn schedule(&self, snapshot_grid: bool) -> Schedule {
        Schedule {
            diag_every: self.run.diag_every,
            s_values: self.run.s_values.clone(),
            snapshot_every: self.run.snapshot_every,
            snapshot_grid,
        }
    }

    pub fn gamma_window(&self) -> Option<(f64, f64)> {
        self.run.gamma_window.map(|[a, b]| (a, b))
    }

    pub fn suite_config(&self) -> SuiteConfig {
        SuiteConfig {
            trials: self.check.trials,
            field_trials: self.check.field_trials,
            max_cutoff: self.check.max_cutoff,
            seed: self.check.seed,
            mutation: self.check.mutation,
        }
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        let spec = self.model_spec()?;
        self.step_plan()?;
        if !(self.run.horizon >= 0.0) || !self.run.horizon.is_finite() {
            return bad(format!("run.horizon must be finite and ≥ 0, got {}", self.run.horizon));
        }
        if self.run.diag_every == 0 {
            return bad("run.diag_every must be ≥ 1".into());
        }
        if self.run.s_values.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return bad("run.s_values must be positive".into());
        }
        if let Some([a, b]) = self.run.gamma_window {
            if !(a >= 0.0 && b > a) {
                return bad(format!("run.gamma_window [{a}, {b}] is not an increasing window"));
            }
        }
        self.initial_condition()
            .build(spec.dimension, spec.cutoff)
            .map_err(|e| CliError::Config(format!("initial condition: {e}")))?;
        for o in &self.sweep.overrides {
            if o.cutoff == Some(0) || o.dt.is_some_and(|dt| !(dt > 0.0)) || o.ensemble == Some(0) {
                return bad(format!("sweep override for κ = {} has a non-positive value", o.kappa));
            }
        }
        let l = &self.lagrangian;
        if l.particles == 0 || l.one_point_particles == 0 || !(l.horizon > 0.0) || !(l.dt > 0.0) {
            return bad("lagrangian particle counts, horizon and dt must be positive".into());
        }
        if !(l.one_point_horizon > 0.0) || !(l.one_point_dt > 0.0) {
            return bad("lagrangian one-point horizon and dt must be positive".into());
        }
        if self.mixing.s_values.iter().any(|s| !(*s > 0.0)) {
            return bad("mixing.s_values must be positive".into());
        }
        if let Some([a, b]) = self.mixing.window {
            if !(a >= 0.0 && b > a) {
                return bad(format!("mixing.window [{a}, {b}] is not an increasing window"));
            }
        }
        if self.check.trials == 0 || self.check.field_trials == 0 || self.check.max_cutoff == 0 {
            return bad("check trial counts and max_cutoff must be ≥ 1".into());
        }
        Ok(())
    }

    /// The sweep config for one κ: same base, κ and resolution replaced.
    pub fn for_kappa(&self, kappa: f64) -> (RunConfig, usize) {
        let mut c = self.clone();
        c.model.kappa = kappa;
        let mut ensemble = self.sweep.ensemble;
        if let Some(o) = self.sweep.overrides.iter().find(|o| o.kappa == kappa) {
            if let Some(n) = o.cutoff {
                c.model.cutoff = n;
            }
            if let Some(dt) = o.dt {
                c.plan.dt = dt;
            }
            if let Some(e) = o.ensemble {
                ensemble = e;
            }
        }
        (c, ensemble)
    }

    /// SHA-256 of the canonical JSON form, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let bytes = serde_json::to_vec(&c).expect("config always serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
