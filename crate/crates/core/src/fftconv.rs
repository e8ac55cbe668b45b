//! Zero-padded linear convolution of grid data with a kernel table.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Result};
use crate::kernel_table::{strides, KernelTable};

/// Upper bound on the padded FFT size.
pub const MAX_FFT_CELLS: usize = 1 << 25;

/// Smallest `2^a 3^b 5^c` that is `>= n`.
pub fn fast_size(n: usize) -> usize {
    let mut best = n.next_power_of_two();
    let mut p5 = 1;
    while p5 < 2 * n {
        let mut p35 = p5;
        while p35 < 2 * n {
            let mut m = p35;
            while m < n {
                m *= 2;
            }
            best = best.min(m);
            p35 *= 3;
        }
        p5 *= 5;
    }
    best
}

/// Computes `c_j = Σ_m w(m) f_{j-m}` for `j` in the grid.
pub struct Convolver {
    dims: Vec<usize>,
    pad: Vec<usize>,
    kernel_hat: Vec<Complex<f64>>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl Convolver {
    pub fn new(dims: &[usize], table: &KernelTable) -> Result<Self> {
        let d = dims.len();
        if table.dim() != d {
            return invalid("kernel table and grid dimensions differ");
        }
        let pad: Vec<usize> = dims.iter().zip(&table.half).map(|(n, h)| fast_size(n + h)).collect();
        let total = pad.iter().try_fold(1usize, |a, b| a.checked_mul(*b));
        if !matches!(total, Some(t) if t <= MAX_FFT_CELLS) {
            return invalid("grid too large to pad for the FFT convolution");
        }
        let total = total.unwrap();
        let mut planner = FftPlanner::new();
        let forward: Vec<_> = pad.iter().map(|n| planner.plan_fft_forward(*n)).collect();
        let inverse: Vec<_> = pad.iter().map(|n| planner.plan_fft_inverse(*n)).collect();
        let mut kernel_hat = vec![Complex::new(0.0, 0.0); total];
        let ext = table.extent();
        let pstr = strides(&pad);
        let tstr = strides(&ext);
        for k in 0..table.weights.len() {
            let mut rem = k;
            let mut at = 0usize;
            for i in 0..d {
                let j = rem / tstr[i];
                rem %= tstr[i];
                let m = j as isize - table.half[i] as isize;
                let wrapped = m.rem_euclid(pad[i] as isize) as usize;
                at += wrapped * pstr[i];
            }
            kernel_hat[at].re += table.weights[k];
        }
        let mut c = Convolver { dims: dims.to_vec(), pad, kernel_hat: Vec::new(), forward, inverse };
        c.transform(&mut kernel_hat, false);
        c.kernel_hat = kernel_hat;
        Ok(c)
    }

    pub fn padded_len(&self) -> usize {
        self.pad.iter().product()
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let d = self.dims.len();
        let total = self.padded_len();
        let mut buf = vec![Complex::new(0.0, 0.0); total];
        let gstr = strides(&self.dims);
        let pstr = strides(&self.pad);
        for (k, v) in f.iter().enumerate() {
            if *v != 0.0 {
                buf[remap(k, &gstr, &pstr, d)].re = *v;
            }
        }
        self.transform(&mut buf, false);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= *k;
        }
        self.transform(&mut buf, true);
        let scale = 1.0 / total as f64;
        (0..f.len()).map(|k| buf[remap(k, &gstr, &pstr, d)].re * scale).collect()
    }

    fn transform(&self, data: &mut [Complex<f64>], inverse: bool) {
        let d = self.pad.len();
        let plans = if inverse { &self.inverse } else { &self.forward };
        let pstr = strides(&self.pad);
        // last axis is contiguous
        plans[d - 1].process(data);
        let mut line = Vec::new();
        for axis in (0..d - 1).rev() {
            let n = self.pad[axis];
            let stride = pstr[axis];
            line.resize(n, Complex::new(0.0, 0.0));
            let outer = data.len() / (n * stride);
            for o in 0..outer {
                for inner in 0..stride {
                    let base = o * n * stride + inner;
                    for i in 0..n {
                        line[i] = data[base + i * stride];
                    }
                    plans[axis].process(&mut line);
                    for i in 0..n {
                        data[base + i * stride] = line[i];
                    }
                }
            }
        }
    }
}

#[inline]
fn remap(k: usize, from: &[usize], to: &[usize], d: usize) -> usize {
    let mut rem = k;
    let mut at = 0;
    for i in 0..d {
        let j = rem / from[i];
        rem %= from[i];
        at += j * to[i];
    }
    at
}

/// Reference direct evaluation of the same sum.
pub fn convolve_direct(dims: &[usize], f: &[f64], table: &KernelTable) -> Vec<f64> {
    let d = dims.len();
    let gstr = strides(dims);
    let mut out = vec![0.0; f.len()];
    let mut m = vec![0isize; d];
    for (j, o) in out.iter_mut().enumerate() {
        let jdx: Vec<usize> = (0..d).map(|i| (j / gstr[i]) % dims[i]).collect();
        let mut acc = 0.0;
        for (i, fi) in f.iter().enumerate() {
            if *fi == 0.0 {
                continue;
            }
            for a in 0..d {
                m[a] = jdx[a] as isize - ((i / gstr[a]) % dims[a]) as isize;
            }
            acc += table.weight(&m) * fi;
        }
        *o = acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel_table::Averaging;
    use crate::kernels::{Anisotropy, KernelParams};

    #[test]
    fn fast_sizes() {
        assert_eq!(fast_size(1), 1);
        assert_eq!(fast_size(7), 8);
        assert_eq!(fast_size(11), 12);
        assert_eq!(fast_size(1601), 1620);
        assert_eq!(fast_size(1024), 1024);
    }

    #[test]
    fn fft_matches_direct_2d() {
        let p = KernelParams::new(2, 2.0, 0.1).unwrap();
        let t = KernelTable::build(&p, &Anisotropy::Isotropic, 2, 0.05, &[3, 4], Averaging::Pair).unwrap();
        let dims = [7, 9];
        let f: Vec<f64> = (0..63).map(|k| ((k * 37 % 11) as f64 / 10.0).min(1.0)).collect();
        let a = Convolver::new(&dims, &t).unwrap().apply(&f);
        let b = convolve_direct(&dims, &f, &t);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12 * b.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        }
    }

    #[test]
    fn fft_matches_direct_3d() {
        let p = KernelParams::new(3, 1.0, 0.1).unwrap();
        let t = KernelTable::build(&p, &Anisotropy::Isotropic, 3, 0.05, &[2, 3, 2], Averaging::Cell).unwrap();
        let dims = [4, 5, 3];
        let f: Vec<f64> = (0..60).map(|k| (k * 13 % 7) as f64 / 6.0).collect();
        let a = Convolver::new(&dims, &t).unwrap().apply(&f);
        let b = convolve_direct(&dims, &f, &t);
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12 * scale);
        }
    }
}
