//! FFT plumbing shared by the transforms and the shear solver.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward/inverse plans for one axis length. Neither direction normalizes.
#[derive(Clone)]
pub struct AxisFft {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for AxisFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AxisFft").field("len", &self.len).finish()
    }
}

impl AxisFft {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        AxisFft { len, forward: planner.plan_fft_forward(len), inverse: planner.plan_fft_inverse(len) }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn plan(&self, forward: bool) -> &Arc<dyn Fft<f64>> {
        if forward {
            &self.forward
        } else {
            &self.inverse
        }
    }

    /// Transforms every line along `axis` of a `len^d` cube (axis 0
    /// contiguous). Simple gather/scatter; the solver has a faster path.
    pub fn transform_axis(&self, data: &mut [Complex64], d: usize, axis: usize, forward: bool) {
        let m = self.len;
        let stride = m.pow(axis as u32);
        let plan = self.plan(forward);
        let mut line = vec![Complex64::new(0.0, 0.0); m];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        let total = m.pow(d as u32);
        for base in 0..total {
            if !(base / stride).is_multiple_of(m) {
                continue;
            }
            for (j, v) in line.iter_mut().enumerate() {
                *v = data[base + j * stride];
            }
            plan.process_with_scratch(&mut line, &mut scratch);
            for (j, v) in line.iter().enumerate() {
                data[base + j * stride] = *v;
            }
        }
    }
}

/// Smallest odd integer `≥ lower` whose only prime factors are 3, 5 and 7.
/// Odd sizes avoid a Nyquist mode, so realness and unitarity coexist.
pub fn smooth_odd_size(lower: usize) -> usize {
    let mut m = lower.max(3) | 1;
    loop {
        let mut r = m;
        for p in [3, 5, 7] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 2;
    }
}
