//! Cubic 3D complex FFT built from 1D rustfft plans.
//!
//! Layout is row-major `[x][y][z]` (z fastest). Transforms are unnormalized;
//! callers apply the `1/n³` factor on the forward side. Strided axes are
//! transformed in blocks of lines gathered into a contiguous buffer.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

const BLOCK: usize = 32;
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub(crate) struct Fft3 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("n", &self.n).finish()
    }
}

impl Fft3 {
    pub(crate) fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            n,
            forward,
            inverse,
            scratch_len,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    /// Spectral to physical. Zero z-lines and zero x-slabs of the input are
    /// skipped, so dealiased inputs cost noticeably less than full ones.
    pub(crate) fn inverse(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len());
        let n = self.n;
        let slab = n * n;
        let plan = &*self.inverse;
        let mut scratch = vec![ZERO; self.scratch_len];
        let mut buf = vec![ZERO; BLOCK * n];

        let mut live_slab = vec![false; n];
        for (ix, s) in data.chunks_exact_mut(slab).enumerate() {
            for line in s.chunks_exact_mut(n) {
                if line.iter().any(|c| *c != ZERO) {
                    plan.process_with_scratch(line, &mut scratch);
                    live_slab[ix] = true;
                }
            }
        }
        for (ix, s) in data.chunks_exact_mut(slab).enumerate() {
            if live_slab[ix] {
                strided_pass(s, n, n, n, |_| true, plan, &mut buf, &mut scratch);
            }
        }
        strided_pass(data, n, slab, slab, |_| true, plan, &mut buf, &mut scratch);
    }

    /// Physical to spectral. With `keep` set, only coefficients whose three
    /// axis indices are all kept are computed; the rest are zeroed.
    pub(crate) fn forward(&self, data: &mut [Complex64], keep: Option<&[bool]>) {
        assert_eq!(data.len(), self.len());
        let n = self.n;
        let slab = n * n;
        let plan = &*self.forward;
        let mut scratch = vec![ZERO; self.scratch_len];
        let mut buf = vec![ZERO; BLOCK * n];
        let kept = |i: usize| keep.is_none_or(|k| k[i]);

        for line in data.chunks_exact_mut(n) {
            plan.process_with_scratch(line, &mut scratch);
        }
        for s in data.chunks_exact_mut(slab) {
            strided_pass(s, n, n, n, kept, plan, &mut buf, &mut scratch);
        }
        strided_pass(data, n, slab, slab, |c| kept(c / n) && kept(c % n), plan, &mut buf, &mut scratch);
        if let Some(k) = keep {
            for (ix, s) in data.chunks_exact_mut(slab).enumerate() {
                for (iy, line) in s.chunks_exact_mut(n).enumerate() {
                    if !(k[ix] && k[iy]) {
                        line.fill(ZERO);
                        continue;
                    }
                    for (c, &kz) in line.iter_mut().zip(k) {
                        if !kz {
                            *c = ZERO;
                        }
                    }
                }
            }
        }
    }
}

/// Transforms along the slow axis of a `len × width` row-major block (line
/// stride `stride == width`) for every column `c` with `active(c)`.
#[allow(clippy::too_many_arguments)]
fn strided_pass(
    data: &mut [Complex64],
    len: usize,
    stride: usize,
    width: usize,
    active: impl Fn(usize) -> bool,
    plan: &dyn Fft<f64>,
    buf: &mut [Complex64],
    scratch: &mut [Complex64],
) {
    let mut cols = [0usize; BLOCK];
    let mut c = 0;
    while c < width {
        let mut b = 0;
        while b < BLOCK && c < width {
            if active(c) {
                cols[b] = c;
                b += 1;
            }
            c += 1;
        }
        if b == 0 {
            continue;
        }
        let contiguous = cols[b - 1] - cols[0] + 1 == b;
        if contiguous {
            let c0 = cols[0];
            for r in 0..len {
                let row = &data[r * stride + c0..r * stride + c0 + b];
                for (j, v) in row.iter().enumerate() {
                    buf[j * len + r] = *v;
                }
            }
        } else {
            for r in 0..len {
                for (j, &cj) in cols[..b].iter().enumerate() {
                    buf[j * len + r] = data[r * stride + cj];
                }
            }
        }
        plan.process_with_scratch(&mut buf[..b * len], scratch);
        if contiguous {
            let c0 = cols[0];
            for r in 0..len {
                let row = &mut data[r * stride + c0..r * stride + c0 + b];
                for (j, v) in row.iter_mut().enumerate() {
                    *v = buf[j * len + r];
                }
            }
        } else {
            for r in 0..len {
                for (j, &cj) in cols[..b].iter().enumerate() {
                    data[r * stride + cj] = buf[j * len + r];
                }
            }
        }
    }
}
