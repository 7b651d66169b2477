//! Observables computed from trajectories: decay and mixing rates,
//! filamentation length, shell spectra and the diffusive-scale fit.
//!
//! Most per-time observables only need the mass `|f̂_k|²` binned by `‖k‖²`,
//! so they are computed from a [`ShellMass`] which both the grid solver and
//! plain spectral fields can produce cheaply.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::spectral::SpectralField;
use crate::stats::{fit_line, LineFit};
use crate::{Error, Result};

/// `|f̂_k|²` summed over `‖k‖² = q`, stored as `exp(2·log_scale) · bins[q]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellMass {
    pub bins: Vec<f64>,
    pub log_scale: f64,
}

impl ShellMass {
    pub fn new(bins: Vec<f64>, log_scale: f64) -> Self {
        ShellMass { bins, log_scale }
    }

    pub fn from_field(f: &SpectralField) -> Self {
        let d = f.dim().get() as i64;
        let n = f.cutoff() as i64;
        let mut bins = vec![0.0; (d * n * n + 1) as usize];
        for (k, c) in f.iter() {
            bins[k.norm_sq() as usize] += c.norm_sqr();
        }
        bins[0] = 0.0;
        ShellMass { bins, log_scale: 0.0 }
    }

    /// `log ‖f‖_{H^s}`; `−∞` for the zero field.
    pub fn log_sobolev(&self, s: f64) -> f64 {
        let sum: f64 =
            self.bins.iter().enumerate().skip(1).filter(|(_, &m)| m > 0.0).map(|(q, &m)| m * (q as f64).powf(s)).sum();
        0.5 * sum.ln() + self.log_scale
    }

    pub fn log_l2(&self) -> f64 {
        self.log_sobolev(0.0)
    }

    /// `log ‖Π≤1 f‖_{L²}`.
    pub fn log_low_mode(&self) -> f64 {
        0.5 * self.bins.get(1).copied().unwrap_or(0.0).ln() + self.log_scale
    }

    /// `ℓ = ‖f‖ / (2π ‖f‖_{H¹})`, `None` for the zero field.
    pub fn filamentation_length(&self) -> Option<f64> {
        let l2 = self.log_sobolev(0.0);
        let h1 = self.log_sobolev(1.0);
        if l2.is_finite() && h1.is_finite() {
            Some((l2 - h1).exp() / (2.0 * PI))
        } else {
            None
        }
    }

    /// Shell spectrum binned by `round(‖k‖)`.
    pub fn profile(&self) -> SpectrumProfile {
        let rmax = ((self.bins.len().saturating_sub(1)) as f64).sqrt().round() as usize;
        let mut power = vec![0.0; rmax + 1];
        let scale = (2.0 * self.log_scale).exp();
        for (q, &m) in self.bins.iter().enumerate() {
            power[(q as f64).sqrt().round() as usize] += m * scale;
        }
        SpectrumProfile { power }
    }
}

/// Shell-summed power indexed by integer radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumProfile {
    pub power: Vec<f64>,
}

impl SpectrumProfile {
    pub fn total(&self) -> f64 {
        self.power.iter().sum()
    }

    /// The same profile scaled to unit total (spectrum of `f/‖f‖`).
    pub fn normalized(&self) -> SpectrumProfile {
        let t = self.total();
        let power = if t > 0.0 { self.power.iter().map(|p| p / t).collect() } else { self.power.clone() };
        SpectrumProfile { power }
    }
}

/// Shell power spectrum of a field.
pub fn power_spectrum(f: &SpectralField) -> SpectrumProfile {
    ShellMass::from_field(f).profile()
}

/// Smallest radius whose cumulative shell mass reaches fraction `q`.
pub fn spectrum_radius(profile: &SpectrumProfile, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("mass fraction {q} outside [0, 1]")));
    }
    let total = profile.total();
    if total <= 0.0 {
        return Err(Error::InsufficientData("spectrum of the zero field".into()));
    }
    let mut acc = 0.0;
    for (r, p) in profile.power.iter().enumerate() {
        acc += p;
        if acc >= q * total * (1.0 - 1e-12) {
            return Ok(r as f64);
        }
    }
    Ok((profile.power.len() - 1) as f64)
}

/// `ℓ(f) = ‖f‖_{L²}/‖∇f‖_{L²}`; `None` for `f = 0`.
pub fn filamentation_length(f: &SpectralField) -> Option<f64> {
    ShellMass::from_field(f).filamentation_length()
}

/// Time-stamped samples of a log-norm.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RateSeries {
    pub samples: Vec<(f64, f64)>,
}

impl RateSeries {
    pub fn new() -> Self {
        RateSeries::default()
    }

    /// Appends a sample. Non-finite values (log of a zero norm) are skipped
    /// since the rate is undefined there; times must increase strictly.
    pub fn push(&mut self, t: f64, value: f64) -> Result<()> {
        if let Some(&(last, _)) = self.samples.last() {
            if t <= last {
                return Err(Error::InvalidArgument(format!("sample time {t} does not increase past {last}")));
            }
        }
        if value.is_finite() {
            self.samples.push((t, value));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn span(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.0 - a.0,
            _ => 0.0,
        }
    }

    /// Samples with `t0 ≤ t ≤ t1`.
    pub fn restricted(&self, t0: f64, t1: f64) -> RateSeries {
        RateSeries { samples: self.samples.iter().copied().filter(|&(t, _)| t >= t0 && t <= t1).collect() }
    }
}

/// Which finite-time surrogate of the exponential rate to report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RateMode {
    /// Least-squares slope over the tail half of the series.
    GlobalSlope,
    /// Largest least-squares slope over sliding windows of the given length
    /// (`None` means a tenth of the series span).
    LimsupProxy { window: Option<f64> },
}

/// A rate with its regression standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rate: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl From<LineFit> for RateEstimate {
    fn from(f: LineFit) -> Self {
        RateEstimate { rate: f.slope, stderr: f.slope_stderr, samples: f.n }
    }
}

fn insufficient(what: &str) -> Error {
    Error::InsufficientData(what.to_string())
}

/// Exponential rate of a log-norm series.
pub fn decay_rate(series: &RateSeries, mode: RateMode) -> Result<RateEstimate> {
    let s = &series.samples;
    if s.len() < 2 {
        return Err(insufficient("fewer than two finite samples"));
    }
    let (t_first, t_last) = (s[0].0, s[s.len() - 1].0);
    match mode {
        RateMode::GlobalSlope => {
            let mid = t_first + 0.5 * (t_last - t_first);
            let tail: Vec<_> = s.iter().copied().filter(|&(t, _)| t >= mid).collect();
            fit_line(&tail).map(RateEstimate::from).ok_or_else(|| insufficient("tail half has fewer than two samples"))
        }
        RateMode::LimsupProxy { window } => {
            let span = t_last - t_first;
            let w = window.unwrap_or(span / 10.0);
            if !(w > 0.0) || span < w * (1.0 - 1e-9) {
                return Err(insufficient("series shorter than the window"));
            }
            let tol = 1e-9 * w;
            let mut best: Option<LineFit> = None;
            let mut end = 0;
            for start in 0..s.len() {
                let t0 = s[start].0;
                if t0 + w > t_last + tol {
                    break;
                }
                while end + 1 < s.len() && s[end + 1].0 <= t0 + w + tol {
                    end += 1;
                }
                if let Some(fit) = fit_line(&s[start..=end]) {
                    if best.is_none_or(|b| fit.slope > b.slope) {
                        best = Some(fit);
                    }
                }
            }
            best.map(RateEstimate::from).ok_or_else(|| insufficient("no window holds two samples"))
        }
    }
}

/// Mixing-rate estimate: the negated least-squares slope of
/// `log ‖f_t‖_{H^{-s}}` over `[t0, t1]`.
pub fn gamma_s_estimate(series: &RateSeries, s: f64, t0: f64, t1: f64) -> Result<RateEstimate> {
    if !(s > 0.0) {
        return Err(Error::InvalidArgument(format!("s must be positive, got {s}")));
    }
    let fit = fit_line(&series.restricted(t0, t1).samples)
        .ok_or_else(|| insufficient("fit window holds fewer than two samples"))?;
    Ok(RateEstimate { rate: -fit.slope, stderr: fit.slope_stderr, samples: fit.n })
}

/// Power law `ℓ ≈ prefactor · κ^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchelorFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub exponent_stderr: f64,
}

/// Least-squares slope of `log ℓ` against `log κ`.
pub fn batchelor_fit(pairs: &[(f64, f64)]) -> Result<BatchelorFit> {
    if pairs.iter().any(|&(k, l)| !(k > 0.0) || !(l > 0.0)) {
        return Err(Error::InvalidArgument("κ and ℓ must be positive".into()));
    }
    let pts: Vec<_> = pairs.iter().map(|&(k, l)| (k.ln(), l.ln())).collect();
    let fit = fit_line(&pts).ok_or_else(|| insufficient("degenerate fit: all κ equal"))?;
    Ok(BatchelorFit { exponent: fit.slope, prefactor: fit.intercept.exp(), exponent_stderr: fit.slope_stderr })
}
