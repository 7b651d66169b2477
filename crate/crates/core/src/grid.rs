//! Grid state for the random-shear splitting scheme.
//!
//! The field lives on an odd `M^d` grid as complex numbers, with each axis
//! independently in physical or Fourier representation. A shear moving axis
//! `a` as a function of axis `b` is a pure phase multiplication once `a` is
//! in Fourier and `b` in physical space, so a step only flips the axes it
//! has to. Realness of the field is exploited in every axis transform:
//! either only half of the lines are transformed (the rest follow by
//! conjugate symmetry) or two real lines are packed into one complex FFT.
//!
//! Normalization: the forward transform carries `1/M`, so the fully Fourier
//! representation holds the analytic coefficients `f̂_k` and the fully
//! physical representation holds point values.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::fft::AxisFft;
use crate::spectral::{grid_frequency, grid_slot, Dimension, GridField, ModeIndex, SpectralField};
use crate::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Phase powers are re-seeded from an exact `cis` every this many wavenumbers.
const RESEED: usize = 32;

/// Mutable solver state for one trajectory.
pub struct ShearGrid {
    dim: usize,
    m: usize,
    data: Vec<Complex64>,
    fourier: [bool; 3],
    fft: AxisFft,
    scratch: Vec<Complex64>,
    buf: Vec<Complex64>,
    phase_c: Vec<f64>,
    phase_w: Vec<Complex64>,
    phase_table: Vec<Complex64>,
    heat_cache: Option<(f64, Vec<f64>)>,
    /// Natural log of a scale factor multiplying the stored data.
    log_scale: f64,
    /// Number of axis transforms performed, for tests and profiling.
    pub transforms: u64,
}

impl std::fmt::Debug for ShearGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ShearGrid")
            .field("dim", &self.dim)
            .field("m", &self.m)
            .field("fourier", &self.fourier)
            .field("log_scale", &self.log_scale)
            .finish()
    }
}

impl Clone for ShearGrid {
    fn clone(&self) -> Self {
        ShearGrid {
            dim: self.dim,
            m: self.m,
            data: self.data.clone(),
            fourier: self.fourier,
            fft: self.fft.clone(),
            scratch: self.scratch.clone(),
            buf: self.buf.clone(),
            phase_c: self.phase_c.clone(),
            phase_w: self.phase_w.clone(),
            phase_table: self.phase_table.clone(),
            heat_cache: self.heat_cache.clone(),
            log_scale: self.log_scale,
            transforms: self.transforms,
        }
    }
}

impl ShearGrid {
    /// Loads a spectral field onto an odd grid of size `m ≥ 2N + 1`.
    pub fn from_field(f: &SpectralField, m: usize) -> Result<Self> {
        if m.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("solver grid size must be odd, got {m}")));
        }
        if m < 2 * f.cutoff() + 1 {
            return Err(Error::Aliasing { grid: m, cutoff: f.cutoff() });
        }
        let dim = f.dim().get();
        let fft = AxisFft::new(m);
        let scratch_len = fft.plan(true).get_inplace_scratch_len().max(fft.plan(false).get_inplace_scratch_len());
        let mut grid = ShearGrid {
            dim,
            m,
            data: vec![ZERO; m.pow(dim as u32)],
            fourier: [true; 3],
            fft,
            scratch: vec![ZERO; scratch_len],
            buf: Vec::new(),
            phase_c: vec![0.0; m],
            phase_w: vec![ZERO; m],
            phase_table: Vec::new(),
            heat_cache: None,
            log_scale: 0.0,
            transforms: 0,
        };
        for (k, c) in f.iter() {
            if !k.is_zero() {
                let idx = grid.slot_of(&k);
                grid.data[idx] = c;
            }
        }
        Ok(grid)
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn dimension(&self) -> Dimension {
        if self.dim == 2 {
            Dimension::Two
        } else {
            Dimension::Three
        }
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    pub fn representation(&self) -> [bool; 3] {
        self.fourier
    }

    fn slot_of(&self, k: &ModeIndex) -> usize {
        let mut idx = 0;
        for axis in (0..self.dim).rev() {
            idx = idx * self.m + grid_slot(k.0[axis], self.m);
        }
        idx
    }

    /// Squared grid `L²` norm of the stored data, ignoring `log_scale`.
    fn raw_norm_sq(&self) -> f64 {
        let physical = (0..self.dim).filter(|&a| !self.fourier[a]).count();
        let sum: f64 = self.data.iter().map(|c| c.norm_sqr()).sum();
        sum / (self.m as f64).powi(physical as i32)
    }

    /// `log ‖f‖_{L²}` over the whole grid, valid in any representation.
    pub fn log_l2(&self) -> f64 {
        0.5 * self.raw_norm_sq().ln() + self.log_scale
    }

    /// Rescales stored data to unit norm when it drifts far from 1, keeping
    /// the true field as `exp(log_scale) · data`.
    pub fn renormalize(&mut self) {
        let n = self.raw_norm_sq().sqrt();
        if n > 0.0 && n.is_finite() && !(1e-100..=1e100).contains(&n) {
            let inv = 1.0 / n;
            for c in &mut self.data {
                *c *= inv;
            }
            self.log_scale += n.ln();
        }
    }

    /// Whether every stored value is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Brings every axis to Fourier representation.
    pub fn ensure_fourier(&mut self) {
        for a in 0..self.dim {
            self.transform(a, true);
        }
    }

    /// Brings every axis to physical representation.
    pub fn ensure_physical(&mut self) {
        for a in 0..self.dim {
            self.transform(a, false);
        }
    }

    /// Coefficients inside the cube `[-N, N]^d`, multiplied by
    /// `exp(log_scale)` unless `unscaled`.
    pub fn spectral_view(&mut self, cutoff: usize, unscaled: bool) -> Result<SpectralField> {
        if 2 * cutoff + 1 > self.m {
            return Err(Error::Aliasing { grid: self.m, cutoff });
        }
        self.ensure_fourier();
        let scale = if unscaled { 1.0 } else { self.log_scale.exp() };
        let mut f = SpectralField::zeros(self.dimension(), cutoff)?;
        let modes: Vec<ModeIndex> = f.canonical().map(|(k, _)| k).collect();
        for k in modes {
            f.set(k, self.data[self.slot_of(&k)] * scale)?;
        }
        Ok(f)
    }

    /// Mass `|f̂_k|²` (unscaled) binned by `‖k‖²` over the cube `[-N, N]^d`.
    pub fn shell_mass(&mut self, cutoff: usize) -> Vec<f64> {
        self.ensure_fourier();
        let m = self.m;
        let n = cutoff.min((m - 1) / 2) as i64;
        let mut bins = vec![0.0; (self.dim as i64 * n * n + 1) as usize];
        let range: Vec<i64> = (-n..=n).collect();
        let slots: Vec<usize> = range.iter().map(|&k| grid_slot(k, m)).collect();
        let d2 = if self.dim == 3 { range.len() } else { 1 };
        for i2 in 0..d2 {
            let (k2, o2) = if self.dim == 3 { (range[i2], slots[i2] * m * m) } else { (0, 0) };
            for (i1, &k1) in range.iter().enumerate() {
                let o1 = o2 + slots[i1] * m;
                for (i0, &k0) in range.iter().enumerate() {
                    let q = (k0 * k0 + k1 * k1 + k2 * k2) as usize;
                    bins[q] += self.data[o1 + slots[i0]].norm_sqr();
                }
            }
        }
        bins[0] = 0.0;
        bins
    }

    /// Point values on the grid (scaled by `exp(log_scale)`).
    pub fn physical(&mut self) -> Result<GridField> {
        let mut copy = self.clone();
        copy.ensure_physical();
        let scale = self.log_scale.exp();
        let samples = copy.data.iter().map(|c| c.re * scale).collect();
        GridField::new(self.dimension(), self.m, samples)
    }

    /// One-axis transform between representations, exploiting realness.
    pub fn transform(&mut self, axis: usize, to_fourier: bool) {
        self.transform_op(axis, to_fourier, LineOp::None);
    }

    fn transform_op(&mut self, axis: usize, to_fourier: bool, op: LineOp) {
        if self.fourier[axis] == to_fourier {
            return;
        }
        self.transforms += 1;
        let m = self.m;
        let strides = [1, m, m * m];
        let sa = strides[axis];
        let others: Vec<usize> = (0..self.dim).filter(|&o| o != axis).collect();
        // line bases, first listed other axis fastest
        let count = m.pow(others.len() as u32);
        let mut bases = Vec::with_capacity(count);
        let mut mirrors = Vec::with_capacity(count);
        for i in 0..count {
            let mut rem = i;
            let mut base = 0;
            let mut mirror = 0;
            for &o in &others {
                let idx = rem % m;
                rem /= m;
                base += idx * strides[o];
                mirror += if self.fourier[o] { (m - idx) % m } else { idx } * strides[o];
            }
            bases.push(base);
            mirrors.push(mirror);
        }
        let hermitian_lines = others.iter().any(|&o| self.fourier[o]);
        let batch = (4096 / m).clamp(1, 64);
        if self.buf.len() < batch * m {
            self.buf.resize(batch * m, ZERO);
        }
        let plan = self.fft.plan(to_fourier).clone();
        let norm = if to_fourier { 1.0 / m as f64 } else { 1.0 };
        let ShearGrid { data, buf, scratch, phase_c, phase_w, phase_table, heat_cache, .. } = self;
        let ctx = OpContext {
            m,
            strides,
            others: &others,
            norm,
            phase_c,
            phase_w,
            phase_table,
            heat: heat_cache.as_ref().map_or(&[][..], |(_, t)| t.as_slice()),
        };

        if hermitian_lines {
            let lines: Vec<(usize, usize)> =
                bases.iter().zip(&mirrors).filter(|(b, mi)| b <= mi).map(|(&b, &mi)| (b, mi)).collect();
            for chunk in lines.chunks(batch) {
                let nb = chunk.len();
                let buf = &mut buf[..nb * m];
                for j in 0..m {
                    for (b, &(base, _)) in chunk.iter().enumerate() {
                        buf[b * m + j] = data[base + j * sa];
                    }
                }
                plan.process_with_scratch(buf, scratch);
                for (line, &(base, _)) in buf.chunks_exact_mut(m).zip(chunk) {
                    ctx.apply(op, line, base);
                }
                for j in 0..m {
                    let jm = if to_fourier { (m - j) % m } else { j };
                    for (b, &(base, mirror)) in chunk.iter().enumerate() {
                        let v = buf[b * m + j];
                        data[base + j * sa] = v;
                        if mirror != base {
                            data[mirror + jm * sa] = v.conj();
                        }
                    }
                }
            }
        } else {
            // all other axes physical: pack line pairs into one complex FFT
            debug_assert!(matches!(op, LineOp::None | LineOp::Moved { .. }));
            let pairs: Vec<(usize, Option<usize>)> = bases.chunks(2).map(|c| (c[0], c.get(1).copied())).collect();
            let i = Complex64::new(0.0, 1.0);
            let mut t1 = vec![ZERO; m];
            let mut t2 = vec![ZERO; m];
            for chunk in pairs.chunks(batch) {
                let nb = chunk.len();
                let buf = &mut buf[..nb * m];
                for j in 0..m {
                    for (b, &(p, q)) in chunk.iter().enumerate() {
                        let x1 = data[p + j * sa];
                        let x2 = q.map_or(ZERO, |q| data[q + j * sa]);
                        buf[b * m + j] = if to_fourier { Complex64::new(x1.re, x2.re) } else { x1 + i * x2 };
                    }
                }
                plan.process_with_scratch(buf, scratch);
                for (line, &(p, q)) in buf.chunks_exact(m).zip(chunk) {
                    if to_fourier {
                        for j in 0..m {
                            let z = line[j];
                            let zm = line[(m - j) % m].conj();
                            t1[j] = (z + zm) * 0.5;
                            t2[j] = (z - zm) * Complex64::new(0.0, -0.5);
                        }
                        ctx.apply(op, &mut t1, p);
                        for (j, v) in t1.iter().enumerate() {
                            data[p + j * sa] = *v;
                        }
                        if let Some(q) = q {
                            ctx.apply(op, &mut t2, q);
                            for (j, v) in t2.iter().enumerate() {
                                data[q + j * sa] = *v;
                            }
                        }
                    } else {
                        for (j, z) in line.iter().enumerate() {
                            data[p + j * sa] = Complex64::new(z.re, 0.0);
                            if let Some(q) = q {
                                data[q + j * sa] = Complex64::new(z.im, 0.0);
                            }
                        }
                    }
                }
            }
        }
        self.fourier[axis] = to_fourier;
    }

    /// Composes the field with the inverse of the shear
    /// `x_a ↦ x_a + a_sin·sin(2πx_b) + a_cos·cos(2πx_b)`.
    pub fn shear(&mut self, axis: usize, driver: usize, a_sin: f64, a_cos: f64) -> Result<()> {
        if a_sin == 0.0 && a_cos == 0.0 {
            return self.check_axes(axis, driver);
        }
        self.shear_profile(axis, driver, |x| {
            let t = 2.0 * PI * x;
            a_sin * t.sin() + a_cos * t.cos()
        })
    }

    fn check_axes(&self, axis: usize, driver: usize) -> Result<()> {
        if axis == driver || axis >= self.dim || driver >= self.dim {
            return Err(Error::InvalidArgument(format!("shear axes ({axis}, {driver}) invalid in {}D", self.dim)));
        }
        Ok(())
    }

    /// Composes the field with the inverse of `x_a ↦ x_a + c(x_b)` for an
    /// arbitrary displacement profile `c` sampled at the grid points.
    ///
    /// The phase multiplication is fused into whichever axis transform the
    /// shear needs; only when no transform is needed is it a separate pass.
    pub fn shear_profile(&mut self, axis: usize, driver: usize, profile: impl Fn(f64) -> f64) -> Result<()> {
        self.check_axes(axis, driver)?;
        let m = self.m;
        for j in 0..m {
            let c = profile(j as f64 / m as f64);
            self.phase_c[j] = c;
            self.phase_w[j] = Complex64::from_polar(1.0, -2.0 * PI * c);
        }
        match (self.fourier[axis], self.fourier[driver]) {
            (true, false) => {
                let strides = [1, m, m * m];
                if axis == 0 {
                    self.phase_rows(strides[driver]);
                } else {
                    let (so, mo) = match (0..self.dim).find(|&o| o != axis && o != driver) {
                        Some(o) => (strides[o], m),
                        None => (0, 1),
                    };
                    self.phase_columns(strides[axis], strides[driver], so, mo);
                }
            }
            (true, true) => {
                self.build_phase_table();
                self.transform_op(driver, false, LineOp::Driver { moved: axis });
            }
            (false, driver_fourier) => {
                if driver_fourier {
                    self.transform(driver, false);
                }
                self.transform_op(axis, true, LineOp::Moved { driver });
            }
        }
        Ok(())
    }

    /// `phase_table[k·m + j] = exp(−2πi k c_j)` for `k = 0..=(m−1)/2`.
    fn build_phase_table(&mut self) {
        let m = self.m;
        let h = (m - 1) / 2;
        self.phase_table.resize((h + 1) * m, ZERO);
        for j in 0..m {
            self.phase_table[j] = Complex64::new(1.0, 0.0);
        }
        for k in 1..=h {
            let (prev, cur) = self.phase_table.split_at_mut(k * m);
            let prev = &prev[(k - 1) * m..];
            let cur = &mut cur[..m];
            if k % RESEED == 0 {
                for (j, v) in cur.iter_mut().enumerate() {
                    *v = Complex64::from_polar(1.0, -2.0 * PI * k as f64 * self.phase_c[j]);
                }
            } else {
                for ((v, p), w) in cur.iter_mut().zip(prev).zip(&self.phase_w) {
                    *v = p * w;
                }
            }
        }
    }

    /// Phase multiplication when the moved axis is contiguous: blocks of rows
    /// advance their own phase recurrences along the row.
    fn phase_rows(&mut self, sb: usize) {
        const BLOCK: usize = 16;
        let m = self.m;
        let h = (m - 1) / 2;
        let rows = self.data.len() / m;
        let mut w = [Complex64::new(1.0, 0.0); BLOCK];
        let mut c = [0.0; BLOCK];
        let mut pw = [Complex64::new(1.0, 0.0); BLOCK];
        for first in (0..rows).step_by(BLOCK) {
            let nb = BLOCK.min(rows - first);
            for r in 0..nb {
                let jb = ((first + r) * m / sb) % m;
                w[r] = self.phase_w[jb];
                c[r] = self.phase_c[jb];
                pw[r] = Complex64::new(1.0, 0.0);
            }
            let block = &mut self.data[first * m..(first + nb) * m];
            for k in 1..=h {
                if k % RESEED == 0 {
                    for r in 0..nb {
                        pw[r] = Complex64::from_polar(1.0, -2.0 * PI * k as f64 * c[r]);
                    }
                } else {
                    for r in 0..nb {
                        pw[r] *= w[r];
                    }
                }
                for (r, row) in block.chunks_exact_mut(m).enumerate() {
                    row[k] *= pw[r];
                    row[m - k] *= pw[r].conj();
                }
            }
        }
    }

    /// Phase multiplication when the moved axis is strided: one recurrence
    /// per driver index, applied to whole rows along axis 0.
    fn phase_columns(&mut self, sa: usize, sb: usize, so: usize, mo: usize) {
        let m = self.m;
        let h = (m - 1) / 2;
        let mut pw = vec![Complex64::new(1.0, 0.0); m];
        // axis 0 is the driver or the remaining axis and is walked contiguously
        let (s_out, n_out, inner_is_b) = if sb == 1 { (so, mo, true) } else { (sb, m, false) };
        for k in 1..=h {
            if k % RESEED == 0 {
                for (j, p) in pw.iter_mut().enumerate() {
                    *p = Complex64::from_polar(1.0, -2.0 * PI * k as f64 * self.phase_c[j]);
                }
            } else {
                for (p, w) in pw.iter_mut().zip(&self.phase_w) {
                    *p *= w;
                }
            }
            for (slab, conj) in [(k * sa, false), ((m - k) * sa, true)] {
                for o in 0..n_out {
                    let start = slab + o * s_out;
                    let row = &mut self.data[start..start + m];
                    if inner_is_b {
                        for (v, p) in row.iter_mut().zip(&pw) {
                            *v *= if conj { p.conj() } else { *p };
                        }
                    } else {
                        let p = if conj { pw[o].conj() } else { pw[o] };
                        for v in row.iter_mut() {
                            *v *= p;
                        }
                    }
                }
            }
        }
    }

    /// Exact heat semigroup `exp(κΔ dt)`, ending in full Fourier
    /// representation. Also clears the zero mode. Fused into the last
    /// pending axis transform when there is one.
    pub fn heat(&mut self, kappa: f64, dt: f64) {
        let m = self.m;
        let key = (kappa * dt).max(0.0);
        if self.heat_cache.as_ref().map(|(k, _)| *k) != Some(key) {
            let table = (0..m)
                .map(|i| {
                    let k = grid_frequency(i, m) as f64;
                    (-key * (2.0 * PI).powi(2) * k * k).exp()
                })
                .collect();
            self.heat_cache = Some((key, table));
        }
        let physical: Vec<usize> = (0..self.dim).filter(|&a| !self.fourier[a]).collect();
        if let Some((&last, rest)) = physical.split_last() {
            for &a in rest {
                self.transform(a, true);
            }
            self.transform_op(last, true, LineOp::Heat);
            return;
        }
        if key > 0.0 {
            let table = &self.heat_cache.as_ref().expect("heat table").1;
            let n2 = if self.dim == 3 { m } else { 1 };
            for i2 in 0..n2 {
                let e2 = if self.dim == 3 { table[i2] } else { 1.0 };
                for i1 in 0..m {
                    let e21 = e2 * table[i1];
                    let row = &mut self.data[(i2 * m + i1) * m..(i2 * m + i1 + 1) * m];
                    for (v, &e0) in row.iter_mut().zip(table) {
                        *v *= e21 * e0;
                    }
                }
            }
        }
        self.data[0] = ZERO;
    }
}

/// Per-line multiplier fused into an axis transform.
#[derive(Debug, Clone, Copy)]
enum LineOp {
    None,
    /// Lines run along the driver (ending physical); the moved axis is in
    /// Fourier representation among the other axes.
    Driver {
        moved: usize,
    },
    /// Lines run along the moved axis (ending Fourier); the driver is
    /// physical among the other axes.
    Moved {
        driver: usize,
    },
    /// Lines end in full Fourier representation.
    Heat,
}

struct OpContext<'a> {
    m: usize,
    strides: [usize; 3],
    others: &'a [usize],
    norm: f64,
    phase_c: &'a [f64],
    phase_w: &'a [Complex64],
    phase_table: &'a [Complex64],
    heat: &'a [f64],
}

impl OpContext<'_> {
    /// Normalizes a freshly transformed line and applies `op`. `base` is the
    /// line's offset, which encodes its indices on the other axes.
    fn apply(&self, op: LineOp, line: &mut [Complex64], base: usize) {
        let m = self.m;
        let index = |axis: usize| (base / self.strides[axis]) % m;
        match op {
            LineOp::None => {
                if self.norm != 1.0 {
                    for v in line.iter_mut() {
                        *v *= self.norm;
                    }
                }
            }
            LineOp::Driver { moved } => {
                let k = grid_frequency(index(moved), m);
                let row = &self.phase_table[k.unsigned_abs() as usize * m..][..m];
                if k >= 0 {
                    for (v, p) in line.iter_mut().zip(row) {
                        *v *= p * self.norm;
                    }
                } else {
                    for (v, p) in line.iter_mut().zip(row) {
                        *v *= p.conj() * self.norm;
                    }
                }
            }
            LineOp::Moved { driver } => {
                let jb = index(driver);
                let (w, c) = (self.phase_w[jb], self.phase_c[jb]);
                let mut p = Complex64::new(self.norm, 0.0);
                line[0] *= self.norm;
                for k in 1..=(m - 1) / 2 {
                    if k % RESEED == 0 {
                        p = Complex64::from_polar(self.norm, -2.0 * PI * k as f64 * c);
                    } else {
                        p *= w;
                    }
                    line[k] *= p;
                    line[m - k] *= p.conj();
                }
            }
            LineOp::Heat => {
                let e: f64 = self.others.iter().map(|&o| self.heat[index(o)]).product();
                for (v, &h) in line.iter_mut().zip(self.heat) {
                    *v *= h * e * self.norm;
                }
                if base == 0 {
                    line[0] = ZERO;
                }
            }
        }
    }
}
