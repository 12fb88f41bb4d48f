//! FFT convolution with a fixed symmetric kernel on n-dimensional grids.

use crate::fracop::grid::{strides, unflatten};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// In-place n-dimensional FFT (row-major) by successive 1D passes.
pub fn fft_nd(data: &mut [Complex64], shape: &[usize], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let st = strides(shape);
    let total: usize = shape.iter().product();
    for (axis, &n) in shape.iter().enumerate() {
        if n == 1 {
            continue;
        }
        let fft = if inverse {
            planner.plan_fft_inverse(n)
        } else {
            planner.plan_fft_forward(n)
        };
        let stride = st[axis];
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let mut idx = vec![0usize; shape.len()];
        for start in 0..total {
            unflatten(shape, start, &mut idx);
            if idx[axis] != 0 {
                continue;
            }
            for k in 0..n {
                line[k] = data[start + k * stride];
            }
            fft.process(&mut line);
            for k in 0..n {
                data[start + k * stride] = line[k];
            }
        }
    }
    if inverse {
        let scale = 1.0 / total as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

/// Linear (non-cyclic) convolution out_i = Σ_j w(j - i) u_j over a grid
/// of fixed shape, for a kernel defined on offsets in (-shape, shape).
pub struct Convolver {
    shape: Vec<usize>,
    pad: Vec<usize>,
    kernel_hat: Vec<Complex64>,
}

impl Convolver {
    /// `w(offset)` must be even: w(d) = w(-d).
    pub fn new<W: Fn(&[i64]) -> f64>(shape: &[usize], w: W) -> Self {
        let pad: Vec<usize> = shape.iter().map(|&n| (2 * n).max(1)).collect();
        let total: usize = pad.iter().product();
        let mut k = vec![Complex64::new(0.0, 0.0); total];
        let mut idx = vec![0usize; pad.len()];
        let mut off = vec![0i64; pad.len()];
        for (flat, slot) in k.iter_mut().enumerate() {
            unflatten(&pad, flat, &mut idx);
            let mut valid = true;
            for d in 0..pad.len() {
                let p = pad[d] as i64;
                let mut o = idx[d] as i64;
                if o >= p / 2 {
                    o -= p;
                }
                if o.unsigned_abs() as usize >= shape[d] {
                    valid = false;
                }
                off[d] = o;
            }
            if valid {
                *slot = Complex64::new(w(&off), 0.0);
            }
        }
        fft_nd(&mut k, &pad, false);
        Convolver {
            shape: shape.to_vec(),
            pad,
            kernel_hat: k,
        }
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let total: usize = self.pad.iter().product();
        let mut buf = vec![Complex64::new(0.0, 0.0); total];
        let pst = strides(&self.pad);
        let n: usize = self.shape.iter().product();
        let mut idx = vec![0usize; self.shape.len()];
        let map = |idx: &[usize]| -> usize { idx.iter().zip(&pst).map(|(i, s)| i * s).sum() };
        for (flat, &v) in u.iter().enumerate().take(n) {
            unflatten(&self.shape, flat, &mut idx);
            buf[map(&idx)] = Complex64::new(v, 0.0);
        }
        fft_nd(&mut buf, &self.pad, false);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        fft_nd(&mut buf, &self.pad, true);
        let mut out = vec![0.0; n];
        for (flat, o) in out.iter_mut().enumerate() {
            unflatten(&self.shape, flat, &mut idx);
            *o = buf[map(&idx)].re;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convolution_matches_direct_sum_2d() {
        let shape = [5usize, 7];
        let w = |o: &[i64]| 1.0 / (1.0 + (o[0] * o[0] + 2 * o[1] * o[1]) as f64);
        let conv = Convolver::new(&shape, w);
        let u: Vec<f64> = (0..35).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let out = conv.apply(&u);
        for i0 in 0..5i64 {
            for i1 in 0..7i64 {
                let mut acc = 0.0;
                for j0 in 0..5i64 {
                    for j1 in 0..7i64 {
                        acc += w(&[j0 - i0, j1 - i1]) * u[(j0 * 7 + j1) as usize];
                    }
                }
                assert!((acc - out[(i0 * 7 + i1) as usize]).abs() < 1e-12);
            }
        }
    }
}
