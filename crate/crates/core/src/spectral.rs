//! Truncated Fourier representation of mean-free real scalar fields on the
//! torus `T^d` (`d = 2` or `3`).
//!
//! Coefficients follow the analytic convention
//! `f̂_k = ∫ e^{-2πi k·x} f(x) dx`, so a field sampled on a uniform grid of
//! `M` points per axis is related to its coefficients by a forward DFT that
//! carries the `1/M^d` factor.
//!
//! The lattice is the full cube `[-N, N]^d`; both `k` and `-k` are stored and
//! Hermitian symmetry is an invariant checked by [`SpectralField::validate`].

use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fft::AxisFft;
use crate::{Error, Result};

/// Absolute tolerance for Hermitian-symmetry checks.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Spatial dimension of the torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Dimension {
    Two,
    Three,
}

impl Dimension {
    pub fn get(self) -> usize {
        match self {
            Dimension::Two => 2,
            Dimension::Three => 3,
        }
    }
}

impl TryFrom<u8> for Dimension {
    type Error = Error;

    fn try_from(d: u8) -> Result<Self> {
        match d {
            2 => Ok(Dimension::Two),
            3 => Ok(Dimension::Three),
            other => Err(Error::InvalidArgument(format!("dimension must be 2 or 3, got {other}"))),
        }
    }
}

impl From<Dimension> for u8 {
    fn from(d: Dimension) -> u8 {
        d.get() as u8
    }
}

/// Integer wavevector. In 2D the third component is always zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeIndex(pub [i64; 3]);

impl ModeIndex {
    pub const ZERO: ModeIndex = ModeIndex([0, 0, 0]);

    pub fn new2(k: i64, l: i64) -> Self {
        ModeIndex([k, l, 0])
    }

    pub fn new3(k: i64, l: i64, m: i64) -> Self {
        ModeIndex([k, l, m])
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0, 0, 0]
    }

    pub fn neg(&self) -> Self {
        ModeIndex([-self.0[0], -self.0[1], -self.0[2]])
    }

    pub fn norm_sq(&self) -> i64 {
        self.0.iter().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    pub fn max_abs(&self) -> i64 {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    /// Canonical half-lattice representative: the first nonzero component is
    /// positive.
    pub fn is_canonical(&self) -> bool {
        self.0.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0)
    }

    pub fn shifted(&self, axis: usize, delta: i64) -> Self {
        let mut c = self.0;
        c[axis] += delta;
        ModeIndex(c)
    }
}

/// Side length `2N + 1` of the coefficient cube.
fn side(cutoff: usize) -> usize {
    2 * cutoff + 1
}

/// Complex Fourier coefficients of a real mean-free field on the cube
/// `[-N, N]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    dim: Dimension,
    cutoff: usize,
    coeffs: Vec<Complex64>,
    /// Simulation time attached to the field.
    pub time: f64,
}

impl SpectralField {
    /// All-zero field.
    pub fn zeros(dim: Dimension, cutoff: usize) -> Result<Self> {
        if cutoff < 1 {
            return Err(Error::InvalidArgument("cutoff must be at least 1".into()));
        }
        let len = side(cutoff).pow(dim.get() as u32);
        Ok(SpectralField { dim, cutoff, coeffs: vec![Complex64::new(0.0, 0.0); len], time: 0.0 })
    }

    /// Builds a field from assignments. Each `(k, c)` sets `f̂_k = c` and
    /// `f̂_{-k} = conj(c)`; non-canonical indices are mapped to their canonical
    /// partner. Assignments to the zero mode are dropped.
    pub fn new<I>(dim: Dimension, cutoff: usize, assignment: I) -> Result<Self>
    where
        I: IntoIterator<Item = (ModeIndex, Complex64)>,
    {
        let mut field = Self::zeros(dim, cutoff)?;
        for (k, c) in assignment {
            if !c.re.is_finite() || !c.im.is_finite() {
                return Err(Error::NonFinite(format!("coefficient for {:?}", k.0)));
            }
            field.set(k, c)?;
        }
        Ok(field)
    }

    pub fn dim(&self) -> Dimension {
        self.dim
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn in_cube(&self, k: &ModeIndex) -> bool {
        let n = self.cutoff as i64;
        let d = self.dim.get();
        k.0[..d].iter().all(|c| c.abs() <= n) && k.0[d..].iter().all(|&c| c == 0)
    }

    fn offset(&self, k: &ModeIndex) -> usize {
        let n = self.cutoff as i64;
        let s = side(self.cutoff);
        let mut idx = 0usize;
        for axis in (0..self.dim.get()).rev() {
            idx = idx * s + (k.0[axis] + n) as usize;
        }
        idx
    }

    fn mode_at(&self, mut offset: usize) -> ModeIndex {
        let n = self.cutoff as i64;
        let s = side(self.cutoff);
        let mut c = [0i64; 3];
        for slot in c.iter_mut().take(self.dim.get()) {
            *slot = (offset % s) as i64 - n;
            offset /= s;
        }
        ModeIndex(c)
    }

    /// Coefficient `f̂_k`; modes outside the cube read as zero.
    pub fn get(&self, k: ModeIndex) -> Complex64 {
        if self.in_cube(&k) {
            self.coeffs[self.offset(&k)]
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    /// Sets `f̂_k` and `f̂_{-k}` consistently. The zero mode stays zero.
    pub fn set(&mut self, k: ModeIndex, c: Complex64) -> Result<()> {
        if !self.in_cube(&k) {
            return Err(Error::InvalidArgument(format!("mode {:?} outside cutoff {}", k.0, self.cutoff)));
        }
        if k.is_zero() {
            return Ok(());
        }
        let (k, c) = if k.is_canonical() { (k, c) } else { (k.neg(), c.conj()) };
        let a = self.offset(&k);
        let b = self.offset(&k.neg());
        self.coeffs[a] = c;
        self.coeffs[b] = c.conj();
        Ok(())
    }

    /// Iterates over every stored mode (including the zero mode).
    pub fn iter(&self) -> impl Iterator<Item = (ModeIndex, Complex64)> + '_ {
        self.coeffs.iter().enumerate().map(move |(i, &c)| (self.mode_at(i), c))
    }

    /// Iterates over canonical (half-lattice) modes only.
    pub fn canonical(&self) -> impl Iterator<Item = (ModeIndex, Complex64)> + '_ {
        self.iter().filter(|(k, _)| k.is_canonical())
    }

    pub fn raw(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Checks finiteness, zero mean and Hermitian symmetry.
    pub fn validate(&self) -> Result<()> {
        for (k, c) in self.iter() {
            if !c.re.is_finite() || !c.im.is_finite() {
                return Err(Error::NonFinite(format!("coefficient at {:?}", k.0)));
            }
            if k.is_zero() {
                if c.norm() != 0.0 {
                    return Err(Error::Invariant("zero mode is not zero".into()));
                }
                continue;
            }
            let partner = self.coeffs[self.offset(&k.neg())];
            if (c - partner.conj()).norm() > SYMMETRY_TOL {
                return Err(Error::Invariant(format!("Hermitian symmetry broken at {:?}", k.0)));
            }
        }
        Ok(())
    }

    /// `Σ_{k≠0} |f̂_k|² ‖k‖^{2s}`.
    pub fn sobolev_norm_sq(&self, s: f64) -> f64 {
        self.iter().filter(|(k, _)| !k.is_zero()).map(|(k, c)| c.norm_sqr() * (k.norm_sq() as f64).powf(s)).sum()
    }

    /// `‖f‖_{H^s}`; `s = 0` is the `L²` norm.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        self.sobolev_norm_sq(s).sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.sobolev_norm(0.0)
    }

    /// `Π≤1 f`: keeps the modes with `‖k‖² = 1`.
    pub fn project_low_modes(&self) -> SpectralField {
        self.filtered(|k| k.norm_sq() == 1)
    }

    /// `Π≤R f`: keeps the modes with `‖k‖ ≤ radius`.
    pub fn project_ball(&self, radius: f64) -> SpectralField {
        self.filtered(|k| k.norm() <= radius)
    }

    fn filtered(&self, keep: impl Fn(&ModeIndex) -> bool) -> SpectralField {
        let mut out = self.clone();
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            if !keep(&self.mode_at(i)) {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        out
    }

    pub fn scale(&mut self, factor: f64) {
        for c in &mut self.coeffs {
            *c *= factor;
        }
    }

    /// Elementwise `self - other` on matching lattices.
    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        if self.dim != other.dim || self.cutoff != other.cutoff {
            return Err(Error::InvalidArgument("lattice mismatch".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *a -= b;
        }
        Ok(out)
    }

    /// Copies coefficients into a lattice with a different cutoff, dropping
    /// modes that do not fit.
    pub fn with_cutoff(&self, cutoff: usize) -> Result<SpectralField> {
        let mut out = SpectralField::zeros(self.dim, cutoff)?;
        out.time = self.time;
        for (k, c) in self.iter() {
            if out.in_cube(&k) {
                let o = out.offset(&k);
                out.coeffs[o] = c;
            }
        }
        Ok(out)
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub(crate) fn offset_of(&self, k: &ModeIndex) -> usize {
        self.offset(k)
    }

    /// Writes the canonical modes as CSV: `k1,k2[,k3],re,im` with a header.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let d = self.dim.get();
        let mut header: Vec<&str> = ["k1", "k2", "k3"][..d].to_vec();
        header.extend(["re", "im"]);
        w.write_record(&header)?;
        for (k, c) in self.canonical() {
            let mut row: Vec<String> = k.0[..d].iter().map(|v| v.to_string()).collect();
            row.push(format!("{:e}", c.re));
            row.push(format!("{:e}", c.im));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`SpectralField::write_csv`]. The cutoff is
    /// inferred from the largest component present unless given.
    pub fn read_csv<R: Read>(reader: R, cutoff: Option<usize>) -> Result<SpectralField> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let cols: Vec<&str> = header.iter().collect();
        let dim = match cols.as_slice() {
            ["k1", "k2", "re", "im"] => Dimension::Two,
            ["k1", "k2", "k3", "re", "im"] => Dimension::Three,
            _ => return Err(Error::Format(format!("unexpected spectral CSV header {cols:?}"))),
        };
        let d = dim.get();
        let mut entries = Vec::new();
        for record in r.records() {
            let record = record?;
            let parse_i = |j: usize| -> Result<i64> {
                record[j].trim().parse::<i64>().map_err(|e| Error::Format(format!("bad index '{}': {e}", &record[j])))
            };
            let parse_f = |j: usize| -> Result<f64> {
                record[j].trim().parse::<f64>().map_err(|e| Error::Format(format!("bad value '{}': {e}", &record[j])))
            };
            let mut k = [0i64; 3];
            for (a, slot) in k.iter_mut().enumerate().take(d) {
                *slot = parse_i(a)?;
            }
            entries.push((ModeIndex(k), Complex64::new(parse_f(d)?, parse_f(d + 1)?)));
        }
        let inferred = entries.iter().map(|(k, _)| k.max_abs() as usize).max().unwrap_or(1).max(1);
        SpectralField::new(dim, cutoff.unwrap_or(inferred), entries)
    }
}

/// `‖f‖_{H^s}` as a free function.
pub fn sobolev_norm(f: &SpectralField, s: f64) -> f64 {
    f.sobolev_norm(s)
}

/// `Π≤1 f` as a free function.
pub fn project_low_modes(f: &SpectralField) -> SpectralField {
    f.project_low_modes()
}

/// Whether transforms may run on grids too coarse to represent every mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aliasing {
    Forbid,
    Allow,
}

/// Real samples on the uniform grid `x_j = j / M` along each axis, axis 0
/// varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    dim: Dimension,
    size: usize,
    samples: Vec<f64>,
}

impl GridField {
    pub fn new(dim: Dimension, size: usize, samples: Vec<f64>) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidArgument("grid size must be at least 2".into()));
        }
        if samples.len() != size.pow(dim.get() as u32) {
            return Err(Error::InvalidArgument(format!(
                "expected {} samples, got {}",
                size.pow(dim.get() as u32),
                samples.len()
            )));
        }
        Ok(GridField { dim, size, samples })
    }

    /// Samples a function of the position on the grid.
    pub fn from_fn(dim: Dimension, size: usize, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let d = dim.get();
        let total = size.pow(d as u32);
        let mut samples = Vec::with_capacity(total);
        let mut x = vec![0.0; d];
        for i in 0..total {
            let mut rem = i;
            for xa in x.iter_mut() {
                *xa = (rem % size) as f64 / size as f64;
                rem /= size;
            }
            samples.push(f(&x));
        }
        GridField::new(dim, size, samples)
    }

    pub fn dim(&self) -> Dimension {
        self.dim
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Grid-space mean of `g²`, which equals `‖f‖²_{L²}` for band-limited data.
    pub fn mean_square(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum::<f64>() / self.samples.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Signed frequency of grid index `i` on an `M`-point axis.
pub(crate) fn grid_frequency(i: usize, m: usize) -> i64 {
    if 2 * i < m {
        i as i64
    } else {
        i as i64 - m as i64
    }
}

/// Grid index holding frequency `k` on an `M`-point axis.
pub(crate) fn grid_slot(k: i64, m: usize) -> usize {
    k.rem_euclid(m as i64) as usize
}

/// Evaluates the field on an `M^d` grid.
pub fn to_physical(f: &SpectralField, size: usize, aliasing: Aliasing) -> Result<GridField> {
    if size < 2 {
        return Err(Error::InvalidArgument("grid size must be at least 2".into()));
    }
    if size < 2 * f.cutoff() + 1 && aliasing == Aliasing::Forbid {
        return Err(Error::Aliasing { grid: size, cutoff: f.cutoff() });
    }
    let d = f.dim().get();
    let total = size.pow(d as u32);
    let mut data = vec![Complex64::new(0.0, 0.0); total];
    for (k, c) in f.iter() {
        let mut idx = 0usize;
        for axis in (0..d).rev() {
            idx = idx * size + grid_slot(k.0[axis], size);
        }
        data[idx] += c;
    }
    let fft = AxisFft::new(size);
    for axis in 0..d {
        fft.transform_axis(&mut data, d, axis, false);
    }
    let samples = data.iter().map(|c| c.re).collect();
    GridField::new(f.dim(), size, samples)
}

/// Forward transform of grid samples, truncated to the cube `[-N, N]^d`.
/// The zero mode is discarded and the output is symmetrized.
pub fn to_spectral(g: &GridField, cutoff: usize, aliasing: Aliasing) -> Result<SpectralField> {
    let m = g.size();
    if m < 2 * cutoff + 1 && aliasing == Aliasing::Forbid {
        return Err(Error::Aliasing { grid: m, cutoff });
    }
    let d = g.dim().get();
    let mut data: Vec<Complex64> = g.samples().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let fft = AxisFft::new(m);
    for axis in 0..d {
        fft.transform_axis(&mut data, d, axis, true);
    }
    let norm = (m as f64).powi(d as i32);
    let mut out = SpectralField::zeros(g.dim(), cutoff)?;
    for i in 0..out.coeffs.len() {
        let k = out.mode_at(i);
        if k.is_zero() || !k.is_canonical() {
            continue;
        }
        let mut idx = 0usize;
        for axis in (0..d).rev() {
            idx = idx * m + grid_slot(k.0[axis], m);
        }
        out.set(k, data[idx] / norm)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn cos_x() -> SpectralField {
        SpectralField::new(Dimension::Two, 1, [(ModeIndex::new2(1, 0), c(1.0, 0.0))]).unwrap()
    }

    #[test]
    fn cosine_has_symmetric_partner() {
        let f = cos_x();
        assert_eq!(f.get(ModeIndex::new2(-1, 0)), c(1.0, 0.0));
        f.validate().unwrap();
    }

    #[test]
    fn zero_mode_is_dropped() {
        let f = SpectralField::new(Dimension::Two, 2, [(ModeIndex::ZERO, c(5.0, 0.0))]).unwrap();
        assert_eq!(f.get(ModeIndex::ZERO), c(0.0, 0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(SpectralField::zeros(Dimension::Two, 0).is_err());
        let nan = SpectralField::new(Dimension::Two, 1, [(ModeIndex::new2(1, 0), c(f64::NAN, 0.0))]);
        assert!(matches!(nan, Err(Error::NonFinite(_))));
        let out = SpectralField::new(Dimension::Two, 1, [(ModeIndex::new2(2, 0), c(1.0, 0.0))]);
        assert!(out.is_err());
    }

    #[test]
    fn validate_catches_asymmetry() {
        let mut f = cos_x();
        f.coeffs[0] = c(0.3, 0.0);
        assert!(f.validate().is_err());
    }

    #[test]
    fn sobolev_examples() {
        let f = cos_x();
        for s in [-2.0, -0.5, 0.0, 1.0, 3.0] {
            assert_relative_eq!(f.sobolev_norm(s), 2f64.sqrt(), epsilon = 1e-14);
        }
        let g = SpectralField::new(Dimension::Two, 2, [(ModeIndex::new2(2, 1), c(1.0, 0.0))]).unwrap();
        assert_relative_eq!(g.sobolev_norm(1.0), 10f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn low_mode_projection_examples() {
        let f = SpectralField::new(Dimension::Two, 2, [(ModeIndex::new2(1, 1), c(1.0, 0.0))]).unwrap();
        assert_eq!(f.project_low_modes().l2_norm(), 0.0);

        let g = SpectralField::new(
            Dimension::Two,
            2,
            [(ModeIndex::new2(0, 1), c(0.0, 1.0)), (ModeIndex::new2(2, 0), c(3.0, 0.0))],
        )
        .unwrap();
        let p = g.project_low_modes();
        let nonzero: Vec<_> = p.iter().filter(|(_, v)| v.norm() > 0.0).map(|(k, _)| k).collect();
        assert_eq!(nonzero, vec![ModeIndex::new2(0, -1), ModeIndex::new2(0, 1)]);
        assert_eq!(p.get(ModeIndex::new2(0, -1)), c(0.0, -1.0));
    }

    #[test]
    fn cosine_on_eight_point_grid() {
        let g = to_physical(&cos_x(), 8, Aliasing::Forbid).unwrap();
        for (j, v) in g.samples().iter().enumerate() {
            let x = (j % 8) as f64 / 8.0;
            assert!((v - 2.0 * (2.0 * PI * x).cos()).abs() < 1e-13);
        }
    }

    #[test]
    fn aliasing_guard() {
        let f = SpectralField::zeros(Dimension::Two, 4).unwrap();
        assert!(matches!(to_physical(&f, 8, Aliasing::Forbid), Err(Error::Aliasing { .. })));
        assert!(to_physical(&f, 8, Aliasing::Allow).is_ok());
    }

    #[test]
    fn csv_round_trip_3d() {
        let f = SpectralField::new(
            Dimension::Three,
            2,
            [(ModeIndex::new3(1, -2, 0), c(0.5, -0.25)), (ModeIndex::new3(0, 0, 1), c(1.0, 2.0))],
        )
        .unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("k1,k2,k3,re,im\n"));
        assert_eq!(text.lines().count(), 1 + (5usize.pow(3) - 1) / 2);
        let back = SpectralField::read_csv(buf.as_slice(), Some(2)).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn csv_rejects_unknown_header() {
        let err = SpectralField::read_csv("a,b,re,im\n1,0,1,0\n".as_bytes(), None);
        assert!(matches!(err, Err(Error::Format(_))));
    }

    fn random_field(dim: Dimension, cutoff: usize, values: &[(f64, f64)]) -> SpectralField {
        let mut f = SpectralField::zeros(dim, cutoff).unwrap();
        let modes: Vec<ModeIndex> = f.canonical().map(|(k, _)| k).collect();
        for (k, &(re, im)) in modes.iter().zip(values.iter().cycle()) {
            f.set(*k, c(re, im)).unwrap();
        }
        f
    }

    proptest! {
        #[test]
        fn assignment_is_hermitian(vals in proptest::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 1..60),
                                   cutoff in 1usize..4, three in any::<bool>()) {
            let dim = if three { Dimension::Three } else { Dimension::Two };
            let f = random_field(dim, cutoff, &vals);
            // independent scan over every stored pair
            for (k, v) in f.iter() {
                let partner = f.get(k.neg());
                prop_assert!((v - partner.conj()).norm() <= SYMMETRY_TOL);
            }
            prop_assert!(f.validate().is_ok());
        }

        #[test]
        fn parseval_and_round_trip(vals in proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..40),
                                   cutoff in 1usize..5, three in any::<bool>()) {
            let dim = if three { Dimension::Three } else { Dimension::Two };
            let f = random_field(dim, cutoff, &vals);
            let m = 2 * cutoff + 2;
            let g = to_physical(&f, m, Aliasing::Forbid).unwrap();
            let l2sq = f.sobolev_norm_sq(0.0);
            prop_assert!((g.mean_square() - l2sq).abs() <= 1e-10 * l2sq.max(1e-300));
            let back = to_spectral(&g, cutoff, Aliasing::Forbid).unwrap();
            for ((_, a), (_, b)) in f.iter().zip(back.iter()) {
                prop_assert!((a - b).norm() <= 1e-12);
            }
        }

        #[test]
        fn projection_idempotent_and_contractive(vals in proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..40),
                                                 s in 0.0..4.0f64) {
            let f = random_field(Dimension::Two, 3, &vals);
            let p = f.project_low_modes();
            prop_assert_eq!(p.project_low_modes(), p.clone());
            prop_assert!(p.sobolev_norm(-s) <= f.sobolev_norm(-s) + 1e-15);
            // on the unit shell every H^s norm coincides with L²
            prop_assert!((p.sobolev_norm(-s) - p.l2_norm()).abs() <= 1e-14);
        }

        #[test]
        fn sobolev_monotone_in_s(vals in proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..40),
                                 s in -3.0..3.0f64, ds in 0.0..2.0f64) {
            let f = random_field(Dimension::Two, 3, &vals);
            prop_assert!(f.sobolev_norm(s) <= f.sobolev_norm(s + ds) * (1.0 + 1e-14));
        }
    }

    #[test]
    fn white_noise_spectrum_is_hermitian() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let samples: Vec<f64> = (0..16 * 16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g = GridField::new(Dimension::Two, 16, samples).unwrap();
        let f = to_spectral(&g, 5, Aliasing::Forbid).unwrap();
        f.validate().unwrap();
    }
}
