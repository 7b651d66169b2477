//! Counter-based Brownian increments.
//!
//! Increment `index` of fine step `n` is the `index`-th normal drawn from
//! ChaCha8 stream `n` under key `seed`, so any step can be regenerated
//! without replaying the ones before it. A coarse step of a refined path is
//! the sum of its fine increments, which lets runs at `dt` and `dt/2` share
//! one Brownian path.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Brownian increments `ΔW^1..ΔW^count`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw(pub Vec<f64>);

impl NoiseDraw {
    pub fn zeros(count: usize) -> Self {
        NoiseDraw(vec![0.0; count])
    }
}

/// Deterministic source of increments keyed by `(seed, step, index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSource {
    pub seed: u64,
    pub count: usize,
}

impl NoiseSource {
    pub fn new(seed: u64, count: usize) -> Self {
        NoiseSource { seed, count }
    }

    /// Standard normals for fine step `n`.
    pub fn normals(&self, n: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(n);
        (0..self.count).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    /// Increments over coarse step `step` of length `dt`, built from
    /// `fine_per_step` fine increments of length `dt / fine_per_step`.
    pub fn draw(&self, step: u64, dt: f64, fine_per_step: u64) -> NoiseDraw {
        let fine = fine_per_step.max(1);
        let scale = (dt / fine as f64).sqrt();
        let mut out = vec![0.0; self.count];
        for j in 0..fine {
            for (o, z) in out.iter_mut().zip(self.normals(step * fine + j)) {
                *o += z * scale;
            }
        }
        NoiseDraw(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_and_step_addressable() {
        let src = NoiseSource::new(42, 4);
        assert_eq!(src.draw(17, 1e-3, 1), src.draw(17, 1e-3, 1));
        assert_ne!(src.draw(17, 1e-3, 1), src.draw(18, 1e-3, 1));
        assert_ne!(src.draw(17, 1e-3, 1), NoiseSource::new(43, 4).draw(17, 1e-3, 1));
    }

    #[test]
    fn coarse_step_sums_fine_steps() {
        let src = NoiseSource::new(9, 12);
        let dt = 0.01;
        let coarse = src.draw(3, dt, 2);
        let a = src.draw(6, dt / 2.0, 1);
        let b = src.draw(7, dt / 2.0, 1);
        for i in 0..12 {
            assert!((coarse.0[i] - a.0[i] - b.0[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn moments_match_normal() {
        let src = NoiseSource::new(1, 4);
        let n = 20_000;
        let dt = 0.5;
        let mut sum = 0.0;
        let mut sq = 0.0;
        let mut cross = 0.0;
        for s in 0..n {
            let d = src.draw(s, dt, 1).0;
            sum += d[0];
            sq += d[0] * d[0];
            cross += d[0] * d[1];
        }
        let n = n as f64;
        // standard errors: mean √(dt/n), variance dt√(2/n), cross dt/√n
        assert!((sum / n).abs() < 4.0 * (dt / n).sqrt());
        assert!((sq / n - dt).abs() < 4.0 * dt * (2.0 / n).sqrt());
        assert!((cross / n).abs() < 4.0 * dt / n.sqrt());
    }
}
