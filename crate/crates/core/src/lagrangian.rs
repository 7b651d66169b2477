//! Lagrangian particles of the shear flow: positions, unwrapped
//! displacements and the growth of the inverse Jacobian.
//!
//! Each step applies the same exact shear maps as the splitting integrator,
//! in the same order and with the same increments, so the scalar and the
//! particles see one velocity field. The inverse transpose of the Jacobian
//! is kept as `e^{log_scale}·Q·R` and re-orthonormalized every few steps,
//! which keeps its norm and determinant accurate long after the Jacobian
//! itself would overflow.

use std::f64::consts::PI;

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::models::{PAIRS_2D, PAIRS_3D};
use crate::noise::{NoiseDraw, NoiseSource};
use crate::spectral::Dimension;
use crate::stats::mean_stderr;
use crate::{Error, Result};

/// Steps between re-orthonormalizations of the Jacobian factor.
pub const QR_EVERY: u32 = 8;
/// Entry size of the pending factor that forces an early re-orthonormalization.
const QR_GROWTH: f64 = 8.0;

/// One particle on `T^d` with its flow derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    dim: Dimension,
    /// Coordinates in `[0, 1)`; unused axes stay 0.
    pub position: [f64; 3],
    /// Displacement on the universal cover.
    pub displacement: [f64; 3],
    q: Matrix3<f64>,
    r: Matrix3<f64>,
    log_scale: f64,
    log_det_factored: f64,
    since_qr: u32,
}

fn pairs(dim: Dimension) -> &'static [(usize, usize)] {
    match dim {
        Dimension::Two => &PAIRS_2D,
        Dimension::Three => &PAIRS_3D,
    }
}

impl ParticleState {
    pub fn new(dim: Dimension, position: &[f64]) -> Result<Self> {
        if position.len() != dim.get() || position.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("position must have {} finite coordinates", dim.get())));
        }
        let mut p = [0.0; 3];
        for (o, v) in p.iter_mut().zip(position) {
            *o = v.rem_euclid(1.0);
        }
        Ok(ParticleState {
            dim,
            position: p,
            displacement: [0.0; 3],
            q: Matrix3::identity(),
            r: Matrix3::identity(),
            log_scale: 0.0,
            log_det_factored: 0.0,
            since_qr: 0,
        })
    }

    pub fn dim(&self) -> Dimension {
        self.dim
    }

    /// Exact map `x_a ↦ x_a + a_sin·sin(2πx_b) + a_cos·cos(2πx_b)`.
    fn shear(&mut self, a: usize, b: usize, a_sin: f64, a_cos: f64) {
        let (s, c) = (2.0 * PI * self.position[b]).sin_cos();
        let shift = a_sin * s + a_cos * c;
        let slope = 2.0 * PI * (a_sin * c - a_cos * s);
        self.position[a] = (self.position[a] + shift).rem_euclid(1.0);
        self.displacement[a] += shift;
        // the inverse transpose picks up (I − slope·e_b e_aᵀ)
        for j in 0..3 {
            let v = self.q[(a, j)];
            self.q[(b, j)] -= slope * v;
        }
    }

    fn reorthonormalize(&mut self) {
        let qr = self.q.qr();
        let mut q = qr.q();
        let mut r2 = qr.r();
        for i in 0..3 {
            if r2[(i, i)] < 0.0 {
                for j in 0..3 {
                    r2[(i, j)] = -r2[(i, j)];
                    q[(j, i)] = -q[(j, i)];
                }
            }
            self.log_det_factored += r2[(i, i)].ln();
        }
        self.q = q;
        self.r = r2 * self.r;
        let s = self.r.norm();
        self.r /= s;
        self.log_scale += s.ln();
        self.since_qr = 0;
    }

    /// `log ‖(D φ)^{-1}‖` (operator norm).
    pub fn log_inv_jacobian_norm(&self) -> f64 {
        let g = self.q * self.r;
        self.log_scale + g.singular_values().max().ln()
    }

    /// `log det D φ`, which stays 0 for a volume-preserving flow.
    pub fn log_det_jacobian(&self) -> f64 {
        -(self.log_det_factored + self.q.determinant().abs().ln())
    }

    /// The Jacobian itself. Overflows once `‖(D φ)^{-1}‖` leaves the range
    /// of `f64`; prefer the log accessors for long runs.
    pub fn jacobian(&self) -> Option<Matrix3<f64>> {
        let g = self.q * self.r * self.log_scale.exp();
        let j = g.try_inverse()?.transpose();
        let d = self.dim.get();
        let mut out = Matrix3::identity();
        for r in 0..d {
            for c in 0..d {
                out[(r, c)] = j[(r, c)];
            }
        }
        out.iter().all(|v| v.is_finite()).then_some(out)
    }
}

/// Advances a particle through one step of shears with the given increments.
pub fn particle_step(p: &mut ParticleState, draw: &NoiseDraw) -> Result<()> {
    let pairs = pairs(p.dim);
    if draw.0.len() != 2 * pairs.len() {
        return Err(Error::InvalidArgument(format!(
            "draw has {} increments, model needs {}",
            draw.0.len(),
            2 * pairs.len()
        )));
    }
    for (i, &(a, b)) in pairs.iter().enumerate() {
        p.shear(a, b, draw.0[2 * i], draw.0[2 * i + 1]);
    }
    p.since_qr += 1;
    if p.since_qr >= QR_EVERY || p.q.amax() > QR_GROWTH {
        p.reorthonormalize();
    }
    Ok(())
}

fn check_horizon(horizon: f64, dt: f64) -> Result<u64> {
    if !(horizon >= 0.0 && dt > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("need T ≥ 0 and dt > 0, got T = {horizon}, dt = {dt}")));
    }
    Ok((horizon / dt).round() as u64)
}

/// Uniform starting points, drawn from a stream the increments never use.
pub fn uniform_positions(dim: Dimension, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    (0..count).map(|_| (0..dim.get()).map(|_| rng.gen::<f64>()).collect()).collect()
}

/// A particle population driven by one shared velocity realization.
#[derive(Debug, Clone)]
pub struct Environment {
    pub noise: NoiseSource,
    pub dt: f64,
    pub particles: Vec<ParticleState>,
    pub step: u64,
}

impl Environment {
    pub fn new(dim: Dimension, positions: &[Vec<f64>], dt: f64, seed: u64) -> Result<Self> {
        check_horizon(0.0, dt)?;
        let particles = positions.iter().map(|p| ParticleState::new(dim, p)).collect::<Result<_>>()?;
        Ok(Environment { noise: NoiseSource::new(seed, 2 * pairs(dim).len()), dt, particles, step: 0 })
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn advance(&mut self) -> Result<()> {
        let draw = self.noise.draw(self.step, self.dt, 1);
        for p in &mut self.particles {
            particle_step(p, &draw)?;
        }
        self.step += 1;
        Ok(())
    }
}

/// Ensemble estimate of the inverse-Jacobian growth exponent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovEstimate {
    /// Largest per-particle exponent, the proxy for the sup over positions.
    pub lambda: f64,
    /// Mean per-particle exponent and its standard error across particles.
    pub mean: f64,
    pub stderr: f64,
    pub horizon: f64,
    pub ensemble: usize,
    /// Largest `|log det D φ|` seen at the end, a volume check.
    pub max_log_det: f64,
}

/// `(1/T) log ‖(D φ^{0,T})^{-1}‖` over uniformly seeded particles sharing
/// one velocity realization.
pub fn lyapunov_estimate(
    dim: Dimension,
    ensemble: usize,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<LyapunovEstimate> {
    let steps = check_horizon(horizon, dt)?;
    if ensemble == 0 || horizon <= 0.0 {
        return Err(Error::InvalidArgument("need at least one particle and T > 0".into()));
    }
    let mut env = Environment::new(dim, &uniform_positions(dim, ensemble, seed), dt, seed)?;
    for _ in 0..steps {
        env.advance()?;
    }
    let t = env.time();
    let rates: Vec<f64> = env.particles.iter().map(|p| p.log_inv_jacobian_norm() / t).collect();
    let (mean, stderr) = mean_stderr(&rates).unwrap_or((rates[0], f64::NAN));
    Ok(LyapunovEstimate {
        lambda: rates.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean,
        stderr,
        horizon: t,
        ensemble,
        max_log_det: env.particles.iter().map(|p| p.log_det_jacobian().abs()).fold(0.0, f64::max),
    })
}

/// Variance per unit time of each displacement coordinate: every axis is
/// moved by one shear pair in 2D and by two in 3D, each pair contributing
/// `sin² + cos² = 1`.
pub fn one_point_variance_rate(dim: Dimension) -> f64 {
    (dim.get() - 1) as f64
}

/// Unwrapped displacements at time `T` of particles that each live in
/// their own velocity realization, the setting of the one-point motion.
pub fn one_point_displacements(
    dim: Dimension,
    count: usize,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<Vec<[f64; 3]>> {
    let steps = check_horizon(horizon, dt)?;
    let starts = uniform_positions(dim, count, seed);
    let mut keys = ChaCha8Rng::seed_from_u64(seed);
    keys.set_stream(u64::MAX - 1);
    let mut out = Vec::with_capacity(count);
    for start in &starts {
        let mut env = Environment::new(dim, std::slice::from_ref(start), dt, keys.gen())?;
        for _ in 0..steps {
            env.advance()?;
        }
        out.push(env.particles[0].displacement);
    }
    Ok(out)
}

/// A row of the particle trajectory output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub position: Vec<f64>,
    pub log_inv_jac_norm: f64,
}

/// Samples one particle every `every` steps up to `T`.
pub fn trajectory(
    dim: Dimension,
    start: &[f64],
    horizon: f64,
    dt: f64,
    seed: u64,
    every: u64,
) -> Result<Vec<TrajectoryRecord>> {
    let steps = check_horizon(horizon, dt)?;
    let every = every.max(1);
    let mut env = Environment::new(dim, &[start.to_vec()], dt, seed)?;
    let record = |env: &Environment| {
        let p = &env.particles[0];
        TrajectoryRecord {
            t: env.time(),
            position: p.position[..dim.get()].to_vec(),
            log_inv_jac_norm: p.log_inv_jacobian_norm(),
        }
    };
    let mut out = vec![record(&env)];
    for n in 1..=steps {
        env.advance()?;
        if n % every == 0 || n == steps {
            out.push(record(&env));
        }
    }
    Ok(out)
}
