//! Named initial conditions.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::spectral::{Dimension, ModeIndex, SpectralField};
use crate::{Error, Result};

/// Initial scalar field presets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialCondition {
    /// `2cos(2πx)`.
    CosX,
    /// Independent complex Gaussian coefficients on every mode with
    /// `round(‖k‖) = radius`, scaled to unit `L²` norm.
    RandomShell { radius: usize, seed: u64 },
}

impl InitialCondition {
    pub fn build(&self, dim: Dimension, cutoff: usize) -> Result<SpectralField> {
        match *self {
            InitialCondition::CosX => {
                SpectralField::new(dim, cutoff, [(ModeIndex([1, 0, 0]), Complex64::new(1.0, 0.0))])
            }
            InitialCondition::RandomShell { radius, seed } => {
                if radius < 1 || radius > cutoff {
                    return Err(Error::InvalidArgument(format!("shell radius {radius} must lie in 1..={cutoff}")));
                }
                let mut f = SpectralField::zeros(dim, cutoff)?;
                let modes: Vec<ModeIndex> =
                    f.canonical().map(|(k, _)| k).filter(|k| k.norm().round() as usize == radius).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for k in modes {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    f.set(k, Complex64::new(re, im))?;
                }
                let norm = f.l2_norm();
                f.scale(1.0 / norm);
                Ok(f)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cos_x_coefficients() {
        let f = InitialCondition::CosX.build(Dimension::Three, 2).unwrap();
        assert_eq!(f.get(ModeIndex([-1, 0, 0])), Complex64::new(1.0, 0.0));
        assert!((f.l2_norm() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn random_shell_is_normalized_and_on_shell() {
        let ic = InitialCondition::RandomShell { radius: 2, seed: 5 };
        let f = ic.build(Dimension::Two, 8).unwrap();
        f.validate().unwrap();
        assert!((f.l2_norm() - 1.0).abs() < 1e-14);
        for (k, c) in f.iter() {
            if c.norm() > 0.0 {
                assert_eq!(k.norm().round(), 2.0);
            }
        }
        assert_eq!(f.project_low_modes().l2_norm(), 0.0);
        assert_eq!(f, ic.build(Dimension::Two, 8).unwrap());
        assert!(InitialCondition::RandomShell { radius: 9, seed: 0 }.build(Dimension::Two, 8).is_err());
    }
}
