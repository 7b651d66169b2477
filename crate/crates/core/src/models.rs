//! The 4-mode (2D) and 12-mode (3D) shear-noise models: Fourier drift and
//! coupling coefficients and the low-mode structural objects `X`, `Y`, `A`.
//!
//! Noise `i` (1-based) belongs to shear pair `(i - 1) / 2`; odd `i` is the
//! sine field, even `i` the cosine field. Pair `p` moves axis `PAIRS[p].0`
//! as a function of axis `PAIRS[p].1`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::spectral::{Dimension, ModeIndex, SpectralField};
use crate::{Error, Result};

/// `(moved axis, driving axis)` for each sine/cosine pair, in splitting order.
pub const PAIRS_2D: [(usize, usize); 2] = [(0, 1), (1, 0)];
pub const PAIRS_3D: [(usize, usize); 6] = [(0, 1), (1, 0), (0, 2), (2, 0), (1, 2), (2, 1)];

/// Model parameters shared by every integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub dimension: Dimension,
    pub kappa: f64,
    pub cutoff: usize,
}

impl ModelSpec {
    pub fn new(dimension: Dimension, kappa: f64, cutoff: usize) -> Result<Self> {
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidArgument(format!("kappa must be finite and ≥ 0, got {kappa}")));
        }
        if cutoff < 1 {
            return Err(Error::InvalidArgument("cutoff must be at least 1".into()));
        }
        Ok(ModelSpec { dimension, kappa, cutoff })
    }

    pub fn noise_count(&self) -> usize {
        match self.dimension {
            Dimension::Two => 4,
            Dimension::Three => 12,
        }
    }

    pub fn pairs(&self) -> &'static [(usize, usize)] {
        match self.dimension {
            Dimension::Two => &PAIRS_2D,
            Dimension::Three => &PAIRS_3D,
        }
    }

    /// Itô drift prefactor of the Fourier system: the transport noise
    /// contributes `½` per moved axis pair (`1` in 3D, where each axis is
    /// moved by two pairs).
    pub fn gamma(&self) -> f64 {
        let transport = match self.dimension {
            Dimension::Two => 0.5,
            Dimension::Three => 1.0,
        };
        (2.0 * PI).powi(2) * (transport + self.kappa)
    }

    /// `−γ‖k‖²`.
    pub fn drift_coefficient(&self, k: ModeIndex) -> Result<f64> {
        if k.is_zero() {
            return Err(Error::InvalidArgument("drift undefined for the zero mode".into()));
        }
        Ok(-self.gamma() * k.norm_sq() as f64)
    }

    /// Neighbour coefficients multiplying `dW^i` in the equation for `f̂_k`.
    /// Follows the sign convention of the Fourier system as usually written,
    /// where the sine noises enter with `+π k_a`.
    pub fn coupling_stencil(&self, k: ModeIndex, i: usize) -> Result<Vec<(ModeIndex, Complex64)>> {
        if i == 0 || i > self.noise_count() {
            return Err(Error::InvalidArgument(format!("noise index {i} outside 1..={}", self.noise_count())));
        }
        let (a, b) = self.pairs()[(i - 1) / 2];
        let ka = k.0[a] as f64;
        if ka == 0.0 {
            return Ok(Vec::new());
        }
        let lo = k.shifted(b, -1);
        let hi = k.shifted(b, 1);
        Ok(if i % 2 == 1 {
            vec![(lo, Complex64::new(PI * ka, 0.0)), (hi, Complex64::new(-PI * ka, 0.0))]
        } else {
            let w = Complex64::new(0.0, -PI * ka);
            vec![(lo, w), (hi, w)]
        })
    }
}

/// Real and imaginary parts of the innermost coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct LowModeVector(pub Vec<f64>);

/// Sum/difference coordinates of the `‖k‖² = 2` neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborVector(pub Vec<f64>);

/// The real matrix `A` with `dX = −γX dt + πA dW`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMatrix(pub DMatrix<f64>);

impl LowModeVector {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn push_parts(out: &mut Vec<f64>, c: Complex64) {
    out.push(c.re);
    out.push(c.im);
}

/// Reads `X` and `Y` off a field.
pub fn extract_xy(f: &SpectralField) -> (LowModeVector, NeighborVector) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    match f.dim() {
        Dimension::Two => {
            push_parts(&mut x, f.get(ModeIndex::new2(1, 0)));
            push_parts(&mut x, f.get(ModeIndex::new2(0, 1)));
            let (a, b) = (f.get(ModeIndex::new2(1, -1)), f.get(ModeIndex::new2(1, 1)));
            push_parts(&mut y, a + b);
            push_parts(&mut y, a - b);
        }
        Dimension::Three => {
            for axis in 0..3 {
                let mut k = [0; 3];
                k[axis] = 1;
                push_parts(&mut x, f.get(ModeIndex(k)));
            }
            for (lo, hi) in [([1, -1, 0], [1, 1, 0]), ([1, 0, -1], [1, 0, 1]), ([0, 1, -1], [0, 1, 1])] {
                let (a, b) = (f.get(ModeIndex(lo)), f.get(ModeIndex(hi)));
                push_parts(&mut y, a + b);
                push_parts(&mut y, a - b);
            }
        }
    }
    (LowModeVector(x), NeighborVector(y))
}

/// Assembles `A(Y)` entry by entry. Accepts 4 (2D) or 12 (3D) coordinates.
pub fn build_noise_matrix(y: &NeighborVector) -> Result<NoiseMatrix> {
    let v = &y.0;
    // 1-based accessor to keep the table readable
    let y = |i: usize| v[i - 1];
    let entries: Vec<(usize, usize, f64)> = match v.len() {
        4 => vec![
            (1, 1, y(3)),
            (1, 2, y(2)),
            (2, 1, y(4)),
            (2, 2, -y(1)),
            (3, 3, y(3)),
            (3, 4, -y(4)),
            (4, 3, -y(2)),
            (4, 4, -y(1)),
        ],
        12 => vec![
            (1, 1, y(3)),
            (1, 2, y(2)),
            (1, 5, y(7)),
            (1, 6, y(6)),
            (2, 1, y(4)),
            (2, 2, -y(1)),
            (2, 5, y(8)),
            (2, 6, -y(5)),
            (3, 3, y(3)),
            (3, 4, -y(4)),
            (3, 9, y(11)),
            (3, 10, y(10)),
            (4, 3, -y(2)),
            (4, 4, -y(1)),
            (4, 9, y(12)),
            (4, 10, -y(9)),
            (5, 7, y(7)),
            (5, 8, -y(8)),
            (5, 11, y(11)),
            (5, 12, -y(12)),
            (6, 7, -y(6)),
            (6, 8, -y(5)),
            (6, 11, -y(10)),
            (6, 12, -y(9)),
        ],
        n => return Err(Error::InvalidArgument(format!("neighbour vector must have 4 or 12 entries, got {n}"))),
    };
    let rows = if v.len() == 4 { 4 } else { 6 };
    let mut a = DMatrix::zeros(rows, v.len());
    for (r, c, val) in entries {
        a[(r - 1, c - 1)] = val;
    }
    Ok(NoiseMatrix(a))
}
