//! Time stepping: random-shear Lie splitting on the grid and Itô
//! Euler–Maruyama on the truncated Fourier system, plus the trajectory
//! driver that records diagnostics.
//!
//! Shear amplitudes follow the velocity fields literally: the first pair
//! displaces `x` by `ΔW¹ sin(2πy) + ΔW² cos(2πy)`. The Fourier stencil used
//! by Euler–Maruyama carries the opposite sign on the sine noises. The two
//! conventions differ by `W^odd → −W^odd`, so they agree in law but not
//! pathwise.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    decay_rate, gamma_s_estimate, power_spectrum, spectrum_radius, RateEstimate, RateMode, RateSeries, ShellMass,
};
use crate::fft::smooth_odd_size;
use crate::grid::ShearGrid;
use crate::models::ModelSpec;
use crate::noise::{NoiseDraw, NoiseSource};
use crate::spectral::{GridField, SpectralField};
use crate::{Error, Result};

/// Growth factor of a single coefficient in one step that flags instability.
pub const INSTABILITY_GROWTH: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Splitting,
    EulerMaruyama,
}

/// Discretization parameters for one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepPlan {
    pub dt: f64,
    pub scheme: Scheme,
    pub seed: u64,
    /// Order in which the shear pairs are applied within a step.
    pub pair_order: Vec<usize>,
    /// Solver grid is the smallest odd 3·5·7-smooth size `≥ grid_factor·N + 1`.
    pub grid_factor: usize,
    /// Brownian increments are sums of this many finer increments.
    pub fine_per_step: u64,
}

impl StepPlan {
    pub fn new(spec: &ModelSpec, dt: f64, scheme: Scheme, seed: u64) -> Result<Self> {
        let plan = StepPlan {
            dt,
            scheme,
            seed,
            pair_order: (0..spec.pairs().len()).collect(),
            grid_factor: 2,
            fine_per_step: 1,
        };
        plan.validate(spec)?;
        Ok(plan)
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        let mut order = self.pair_order.clone();
        order.sort_unstable();
        if order != (0..spec.pairs().len()).collect::<Vec<_>>() {
            return Err(Error::InvalidArgument(format!(
                "pair order {:?} is not a permutation of the {} shear pairs",
                self.pair_order,
                spec.pairs().len()
            )));
        }
        if self.grid_factor < 2 {
            return Err(Error::InvalidArgument("grid factor must be at least 2".into()));
        }
        if self.fine_per_step < 1 {
            return Err(Error::InvalidArgument("fine_per_step must be at least 1".into()));
        }
        Ok(())
    }

    pub fn grid_size(&self, spec: &ModelSpec) -> usize {
        solver_grid_size(spec.cutoff, self.grid_factor)
    }

    /// Stability guideline for the explicit scheme.
    pub fn em_stable_dt(spec: &ModelSpec) -> f64 {
        0.1 / (spec.gamma() * (spec.cutoff * spec.cutoff) as f64)
    }
}

/// Odd smooth grid size with at least `factor·N + 1` points per axis.
pub fn solver_grid_size(cutoff: usize, factor: usize) -> usize {
    smooth_odd_size((factor * cutoff + 1).max(2 * cutoff + 1))
}

fn default_grid(f: &SpectralField) -> Result<ShearGrid> {
    ShearGrid::from_field(f, solver_grid_size(f.cutoff(), 2))
}

/// Shear `x_a ↦ x_a + a_sin sin(2πx_b) + a_cos cos(2πx_b)` applied to `f`,
/// truncated back to the cube of `f`.
pub fn shear_step(f: &SpectralField, axis: usize, driver: usize, a_sin: f64, a_cos: f64) -> Result<SpectralField> {
    let mut grid = default_grid(f)?;
    grid.shear(axis, driver, a_sin, a_cos)?;
    let mut out = grid.spectral_view(f.cutoff(), false)?;
    out.time = f.time;
    Ok(out)
}

/// Exact heat semigroup on the truncated field.
pub fn heat_step(f: &SpectralField, kappa: f64, dt: f64) -> Result<SpectralField> {
    if !(kappa >= 0.0) || !(dt >= 0.0) {
        return Err(Error::InvalidArgument("kappa and dt must be non-negative".into()));
    }
    let mut out = f.clone();
    let c = kappa * (2.0 * std::f64::consts::PI).powi(2) * dt;
    let modes: Vec<_> = f.canonical().collect();
    for (k, v) in modes {
        out.set(k, v * (-c * k.norm_sq() as f64).exp())?;
    }
    out.time = f.time + dt;
    Ok(out)
}

/// Applies the shears of one splitting step (without heat) to a grid.
fn apply_shears(grid: &mut ShearGrid, spec: &ModelSpec, plan: &StepPlan, draw: &NoiseDraw) -> Result<()> {
    let pairs = spec.pairs();
    for &p in &plan.pair_order {
        let (a, b) = pairs[p];
        grid.shear(a, b, draw.0[2 * p], draw.0[2 * p + 1])?;
    }
    Ok(())
}

fn check_draw(spec: &ModelSpec, draw: &NoiseDraw) -> Result<()> {
    if draw.0.len() != spec.noise_count() {
        return Err(Error::InvalidArgument(format!(
            "draw has {} increments, model needs {}",
            draw.0.len(),
            spec.noise_count()
        )));
    }
    Ok(())
}

/// One Lie-splitting step: all shear pairs in plan order, then heat.
/// The result is truncated back to the cube of `f`.
pub fn splitting_step(f: &SpectralField, spec: &ModelSpec, plan: &StepPlan, draw: &NoiseDraw) -> Result<SpectralField> {
    check_draw(spec, draw)?;
    let mut grid = ShearGrid::from_field(f, plan.grid_size(spec))?;
    apply_shears(&mut grid, spec, plan, draw)?;
    grid.heat(spec.kappa, plan.dt);
    let mut out = grid.spectral_view(f.cutoff(), false)?;
    out.time = f.time + plan.dt;
    Ok(out)
}

/// Precomputed Euler–Maruyama update on the coefficient cube.
#[derive(Debug, Clone)]
pub struct EmStepper {
    spec: ModelSpec,
    drift: Vec<f64>,
    /// Per noise index: `(target, source, weight)` triples.
    couplings: Vec<Vec<(usize, usize, Complex64)>>,
}

impl EmStepper {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        let probe = SpectralField::zeros(spec.dimension, spec.cutoff)?;
        let modes: Vec<_> = probe.iter().map(|(k, _)| k).collect();
        let mut drift = vec![0.0; modes.len()];
        let mut couplings = vec![Vec::new(); spec.noise_count()];
        for k in &modes {
            let t = probe.offset_of(k);
            if k.is_zero() {
                continue;
            }
            drift[t] = spec.drift_coefficient(*k)?;
            for (i, list) in couplings.iter_mut().enumerate() {
                for (nb, w) in spec.coupling_stencil(*k, i + 1)? {
                    if probe.in_cube(&nb) && !nb.is_zero() {
                        list.push((t, probe.offset_of(&nb), w));
                    }
                }
            }
        }
        Ok(EmStepper { spec: *spec, drift, couplings })
    }

    /// Advances `f` in place from a frozen copy of the pre-step state.
    /// Returns the largest one-step growth factor among coefficients that
    /// carry at least a tenth of the largest pre-step magnitude; smaller ones
    /// are legitimately filled from their neighbours at any step size.
    pub fn step(&self, f: &mut SpectralField, dt: f64, draw: &NoiseDraw) -> Result<f64> {
        check_draw(&self.spec, draw)?;
        if f.dim() != self.spec.dimension || f.cutoff() != self.spec.cutoff {
            return Err(Error::InvalidArgument("field does not match the stepper lattice".into()));
        }
        let old: Vec<Complex64> = f.raw().to_vec();
        let new = f.coeffs_mut();
        for ((n, o), d) in new.iter_mut().zip(&old).zip(&self.drift) {
            *n = o * (1.0 + d * dt);
        }
        for (list, &dw) in self.couplings.iter().zip(&draw.0) {
            if dw == 0.0 {
                continue;
            }
            for &(t, s, w) in list {
                new[t] += w * old[s] * dw;
            }
        }
        let scale = old.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let floor = 0.1 * scale;
        let mut growth: f64 = 0.0;
        for (n, o) in new.iter().zip(&old) {
            let on = o.norm();
            if on >= floor && on > 0.0 {
                growth = growth.max(n.norm() / on);
            }
        }
        f.time += dt;
        Ok(growth)
    }
}

/// One Itô Euler–Maruyama step of the truncated Fourier system.
pub fn euler_maruyama_step(
    f: &SpectralField,
    spec: &ModelSpec,
    plan: &StepPlan,
    draw: &NoiseDraw,
) -> Result<SpectralField> {
    let stepper = EmStepper::new(spec)?;
    let mut out = f.clone();
    let growth = stepper.step(&mut out, plan.dt, draw)?;
    if growth > INSTABILITY_GROWTH {
        return Err(Error::Instability { time: f.time, growth });
    }
    Ok(out)
}

/// What to record along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Record diagnostics every this many steps (and at the end).
    pub diag_every: u64,
    /// Regularities `s` at which `‖f‖_{H^{-s}}` is recorded.
    pub s_values: Vec<f64>,
    /// Keep a snapshot every this many steps (and at the end); 0 keeps only
    /// the initial and final states.
    pub snapshot_every: u64,
    /// Also keep point values with each snapshot.
    pub snapshot_grid: bool,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule { diag_every: 50, s_values: Vec::new(), snapshot_every: 0, snapshot_grid: false }
    }
}

/// One line of the diagnostic stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub t: f64,
    pub l2: f64,
    pub h_minus_s: BTreeMap<String, f64>,
    pub low_mode_l2: f64,
    pub ell: Option<f64>,
    pub kappa: f64,
    pub seed: u64,
    /// Natural logs of `l2` and `low_mode_l2`; `None` where the norm is zero.
    pub log_l2: Option<f64>,
    pub log_low_mode_l2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub field: SpectralField,
    pub grid: Option<GridField>,
}

/// Everything a trajectory produces.
#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub records: Vec<DiagnosticRecord>,
    pub l2: RateSeries,
    pub low_mode: RateSeries,
    pub h_minus_s: Vec<(f64, RateSeries)>,
    pub snapshots: Vec<Snapshot>,
    pub final_field: SpectralField,
    /// `log ‖f_T‖_{L²}` over the whole solver grid (splitting) or cube.
    pub final_log_l2_grid: f64,
    pub steps: u64,
}

/// Per-run summary of rates, scales and spectra. Rates that cannot be
/// estimated (for instance from a zero initial field) are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub kappa: f64,
    pub seed: u64,
    pub horizon: f64,
    /// Tail-half slope of `log ‖f_t‖_{L²}`.
    pub rate_global: Option<f64>,
    pub rate_global_stderr: Option<f64>,
    /// Largest windowed slope of `log ‖Π≤1 f_t‖_{L²}`.
    pub rate_limsup_proxy: Option<f64>,
    pub rate_limsup_proxy_stderr: Option<f64>,
    /// The theoretical floor `−γ` for the low-mode rate.
    pub bound: f64,
    /// Tail-half time average of the filamentation length.
    pub ell_mean: Option<f64>,
    /// Radius holding 95% of the final spectral mass.
    pub spectrum_radius_95: Option<f64>,
    /// Mixing-rate estimates keyed by `s`.
    pub gamma_s: BTreeMap<String, RateEstimate>,
}

impl SimulationOutput {
    /// Summarizes the run. `gamma_window` selects the fit window for the
    /// mixing rates; without one the whole series is used.
    pub fn summary(&self, spec: &ModelSpec, seed: u64, gamma_window: Option<(f64, f64)>) -> RunSummary {
        let global = decay_rate(&self.l2, RateMode::GlobalSlope).ok();
        let limsup = decay_rate(&self.low_mode, RateMode::LimsupProxy { window: None }).ok();
        let t_end = self.records.last().map_or(0.0, |r| r.t);
        let tail: Vec<f64> = self.records.iter().filter(|r| r.t >= 0.5 * t_end).filter_map(|r| r.ell).collect();
        let ell_mean = (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64);
        let spectrum_radius_95 = spectrum_radius(&power_spectrum(&self.final_field), 0.95).ok();
        let (t0, t1) = gamma_window.unwrap_or((0.0, t_end));
        let gamma_s = self
            .h_minus_s
            .iter()
            .filter_map(|(s, series)| gamma_s_estimate(series, *s, t0, t1).ok().map(|e| (s_key(*s), e)))
            .collect();
        RunSummary {
            kappa: spec.kappa,
            seed,
            horizon: t_end,
            rate_global: global.map(|e| e.rate),
            rate_global_stderr: global.map(|e| e.stderr),
            rate_limsup_proxy: limsup.map(|e| e.rate),
            rate_limsup_proxy_stderr: limsup.map(|e| e.stderr),
            bound: -spec.gamma(),
            ell_mean,
            spectrum_radius_95,
            gamma_s,
        }
    }
}

/// Key used for `s` in the `h_minus_s` map.
pub fn s_key(s: f64) -> String {
    format!("{s}")
}

enum State {
    Grid(ShearGrid),
    Em(EmStepper, SpectralField),
}

impl State {
    fn shell(&mut self, cutoff: usize) -> ShellMass {
        match self {
            State::Grid(g) => {
                g.renormalize();
                ShellMass::new(g.shell_mass(cutoff), g.log_scale())
            }
            State::Em(_, f) => ShellMass::from_field(f),
        }
    }

    fn finite(&self) -> bool {
        match self {
            State::Grid(g) => g.is_finite(),
            State::Em(_, f) => f.validate().is_ok(),
        }
    }

    fn field(&mut self, cutoff: usize, t: f64) -> Result<SpectralField> {
        let mut f = match self {
            State::Grid(g) => g.spectral_view(cutoff, false)?,
            State::Em(_, f) => f.clone(),
        };
        f.time = t;
        Ok(f)
    }

    fn grid_values(&mut self, t: f64, cutoff: usize) -> Result<GridField> {
        match self {
            State::Grid(g) => g.physical(),
            State::Em(_, f) => {
                let mut f = f.clone();
                f.time = t;
                crate::spectral::to_physical(&f, 2 * cutoff + 2, crate::spectral::Aliasing::Forbid)
            }
        }
    }
}

/// Advances `f0` to `horizon`, recording diagnostics per `schedule`.
/// Deterministic given `(f0, spec, plan)`.
pub fn simulate(
    f0: &SpectralField,
    spec: &ModelSpec,
    plan: &StepPlan,
    horizon: f64,
    schedule: &Schedule,
) -> Result<SimulationOutput> {
    plan.validate(spec)?;
    if !(horizon >= 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be ≥ 0, got {horizon}")));
    }
    if f0.dim() != spec.dimension || f0.cutoff() != spec.cutoff {
        return Err(Error::InvalidArgument("initial field does not match the model lattice".into()));
    }
    f0.validate()?;
    let steps = (horizon / plan.dt).round() as u64;
    let noise = NoiseSource::new(plan.seed, spec.noise_count());
    let mut state = match plan.scheme {
        Scheme::Splitting => State::Grid(ShearGrid::from_field(f0, plan.grid_size(spec))?),
        Scheme::EulerMaruyama => State::Em(EmStepper::new(spec)?, f0.clone()),
    };
    let diag_every = schedule.diag_every.max(1);
    let mut out = SimulationOutput {
        records: Vec::new(),
        l2: RateSeries::new(),
        low_mode: RateSeries::new(),
        h_minus_s: schedule.s_values.iter().map(|&s| (s, RateSeries::new())).collect(),
        snapshots: Vec::new(),
        final_field: f0.clone(),
        final_log_l2_grid: f64::NAN,
        steps,
    };

    for step in 0..=steps {
        let t = step as f64 * plan.dt;
        if step > 0 {
            let draw = noise.draw(step - 1, plan.dt, plan.fine_per_step);
            match &mut state {
                State::Grid(g) => {
                    apply_shears(g, spec, plan, &draw)?;
                    g.heat(spec.kappa, plan.dt);
                }
                State::Em(stepper, f) => {
                    let growth = stepper.step(f, plan.dt, &draw)?;
                    if !growth.is_finite() {
                        return Err(Error::NumericalAbort(t));
                    }
                    if growth > INSTABILITY_GROWTH {
                        return Err(Error::Instability { time: t, growth });
                    }
                }
            }
        }
        let last = step == steps;
        if step % diag_every == 0 || last {
            if !state.finite() {
                return Err(Error::NumericalAbort(t));
            }
            let shell = state.shell(spec.cutoff);
            let log_l2 = shell.log_l2();
            let log_low = shell.log_low_mode();
            let mut h = BTreeMap::new();
            for (s, series) in out.h_minus_s.iter_mut() {
                let v = shell.log_sobolev(-*s);
                series.push(t, v)?;
                h.insert(s_key(*s), v.exp());
            }
            out.l2.push(t, log_l2)?;
            out.low_mode.push(t, log_low)?;
            out.records.push(DiagnosticRecord {
                t,
                l2: log_l2.exp(),
                h_minus_s: h,
                low_mode_l2: log_low.exp(),
                ell: shell.filamentation_length(),
                kappa: spec.kappa,
                seed: plan.seed,
                log_l2: log_l2.is_finite().then_some(log_l2),
                log_low_mode_l2: log_low.is_finite().then_some(log_low),
            });
        }
        let snap = step == 0 || last || (schedule.snapshot_every > 0 && step % schedule.snapshot_every == 0);
        if snap {
            let field = state.field(spec.cutoff, t)?;
            let grid = if schedule.snapshot_grid { Some(state.grid_values(t, spec.cutoff)?) } else { None };
            out.snapshots.push(Snapshot { t, field, grid });
        }
    }
    out.final_field = state.field(spec.cutoff, steps as f64 * plan.dt)?;
    out.final_log_l2_grid = match &state {
        State::Grid(g) => g.log_l2(),
        State::Em(_, f) => f.l2_norm().ln(),
    };
    Ok(out)
}
