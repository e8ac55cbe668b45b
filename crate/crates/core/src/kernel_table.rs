//! Lattice tables of cell-averaged kernels.
//!
//! `Averaging::Cell` gives `w(m) = ∫_{cell m} k`, the weight seen by a point
//! at a cell corner-free lattice position. `Averaging::Pair` gives
//! `w(m) = h^{-d} ∫_{cell 0} ∫_{cell m} k(x - y) dy dx`, i.e. the kernel
//! integrated against the tent `Π (1 - |z_i - m_i h| / h)_+`. Both sum to
//! `∫ k` over the whole lattice.

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::kernels::{Anisotropy, KernelParams};
use crate::quadrature::{gauss_legendre, Sum};

/// Radial profile of a kernel together with the radii where it is not smooth.
pub trait RadialProfile: Sync {
    fn value(&self, t: f64) -> f64;
    fn breaks(&self) -> Vec<f64>;
    /// Radius beyond which the profile vanishes.
    fn support(&self) -> f64 {
        f64::INFINITY
    }
}

impl RadialProfile for KernelParams {
    fn value(&self, t: f64) -> f64 {
        self.profile(t)
    }

    fn breaks(&self) -> Vec<f64> {
        vec![self.r]
    }
}

/// `k(t)` restricted to `inner < t <= outer`.
#[derive(Debug, Clone, Copy)]
pub struct Truncated {
    pub p: KernelParams,
    pub inner: f64,
    pub outer: f64,
}

impl RadialProfile for Truncated {
    fn value(&self, t: f64) -> f64 {
        if t > self.inner && t <= self.outer {
            self.p.profile(t)
        } else {
            0.0
        }
    }

    fn breaks(&self) -> Vec<f64> {
        let mut b = vec![self.p.r];
        if self.inner > 0.0 {
            b.push(self.inner);
        }
        if self.outer.is_finite() {
            b.push(self.outer);
        }
        b
    }

    fn support(&self) -> f64 {
        self.outer
    }
}

/// `k_fine - k_coarse` for two core radii with the same `d`, `s`.
#[derive(Debug, Clone, Copy)]
pub struct BandDifference {
    pub fine: KernelParams,
    pub coarse: KernelParams,
}

impl RadialProfile for BandDifference {
    fn value(&self, t: f64) -> f64 {
        if t >= self.coarse.r {
            0.0
        } else {
            self.fine.profile(t) - self.coarse.profile(t)
        }
    }

    fn breaks(&self) -> Vec<f64> {
        vec![self.fine.r, self.coarse.r]
    }

    fn support(&self) -> f64 {
        self.coarse.r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Averaging {
    Cell,
    Pair,
}

/// Adaptive product-Gauss cubature of `g(z/|z|) k(|z|)` over boxes.
pub struct BoxCubature<'a, P: RadialProfile> {
    prof: &'a P,
    g: &'a Anisotropy,
    breaks: Vec<f64>,
    support: f64,
    g_const: bool,
    g_value: f64,
    max_depth: usize,
    rules: [(Vec<f64>, Vec<f64>); 4],
}

impl<'a, P: RadialProfile> BoxCubature<'a, P> {
    pub fn new(prof: &'a P, g: &'a Anisotropy, max_depth: usize) -> Self {
        let rules = [gauss_legendre(3), gauss_legendre(4), gauss_legendre(6), gauss_legendre(8)];
        BoxCubature {
            prof,
            g,
            breaks: prof.breaks(),
            support: prof.support(),
            g_const: g.constant_value().is_some(),
            g_value: g.constant_value().unwrap_or(1.0),
            max_depth,
            rules,
        }
    }

    /// `∫_{[lo,hi]} k(z) w(z) dz` where `w` is the tent centred at `tent.0`
    /// with half-width `tent.1`, or 1 when `tent` is `None`.
    pub fn integrate(&self, lo: &[f64], hi: &[f64], tent: Option<(&[f64], f64)>) -> f64 {
        let d = lo.len();
        match tent {
            None => self.rec(lo, hi, None, 0),
            Some((c, h)) => {
                // split at the tent apex so the weight is linear on each piece
                let mut acc = Sum::default();
                let mut a = vec![0.0; d];
                let mut b = vec![0.0; d];
                for mask in 0..(1usize << d) {
                    let mut empty = false;
                    for i in 0..d {
                        let (l, u) = if mask & (1 << i) == 0 { (c[i] - h, c[i]) } else { (c[i], c[i] + h) };
                        a[i] = l.max(lo[i]);
                        b[i] = u.min(hi[i]);
                        if a[i] >= b[i] {
                            empty = true;
                        }
                    }
                    if !empty {
                        acc.add(self.rec(&a, &b, Some((c, h)), 0));
                    }
                }
                acc.value()
            }
        }
    }

    fn rec(&self, lo: &[f64], hi: &[f64], tent: Option<(&[f64], f64)>, depth: usize) -> f64 {
        let d = lo.len();
        let (rmin, rmax) = radius_range(lo, hi);
        if rmin >= self.support {
            return 0.0;
        }
        let size = (0..d).map(|i| hi[i] - lo[i]).fold(0.0, f64::max);
        let straddles = self.breaks.iter().any(|b| rmin < *b && *b < rmax) || (rmin == 0.0 && !self.g_const);
        if straddles && depth < self.max_depth {
            let mut acc = 0.0;
            let mut a = vec![0.0; d];
            let mut b = vec![0.0; d];
            for mask in 0..(1usize << d) {
                for i in 0..d {
                    let mid = 0.5 * (lo[i] + hi[i]);
                    if mask & (1 << i) == 0 {
                        a[i] = lo[i];
                        b[i] = mid;
                    } else {
                        a[i] = mid;
                        b[i] = hi[i];
                    }
                }
                acc += self.rec(&a, &b, tent, depth + 1);
            }
            return acc;
        }
        if straddles {
            return self.gauss_split(lo, hi, tent);
        }
        let q = rmin / size;
        let rule = if q < 2.0 {
            &self.rules[3]
        } else if q < 6.0 {
            &self.rules[2]
        } else if q < 24.0 {
            &self.rules[1]
        } else {
            &self.rules[0]
        };
        self.gauss(lo, hi, tent, rule)
    }

    /// Product rule in the leading coordinates with the last coordinate split
    /// where the ray crosses a break radius.
    fn gauss_split(&self, lo: &[f64], hi: &[f64], tent: Option<(&[f64], f64)>) -> f64 {
        let d = lo.len();
        let rule = &self.rules[3];
        let n = rule.0.len();
        let outer = n.pow(d as u32 - 1);
        let last = d - 1;
        let mut acc = 0.0;
        let mut a = [0.0f64; 8];
        let mut b = [0.0f64; 8];
        let mut cuts = Vec::with_capacity(2 * self.breaks.len() + 2);
        for q in 0..outer {
            let mut rem = q;
            let mut w = 1.0;
            let mut rho2 = 0.0;
            for i in 0..last {
                let k = rem % n;
                rem /= n;
                let zi = 0.5 * (lo[i] + hi[i]) + 0.5 * (hi[i] - lo[i]) * rule.0[k];
                a[i] = zi;
                b[i] = zi;
                rho2 += zi * zi;
                w *= 0.5 * (hi[i] - lo[i]) * rule.1[k];
            }
            cuts.clear();
            cuts.push(lo[last]);
            for br in &self.breaks {
                let r2 = br * br - rho2;
                if r2 > 0.0 {
                    for c in [-r2.sqrt(), r2.sqrt()] {
                        if c > lo[last] && c < hi[last] {
                            cuts.push(c);
                        }
                    }
                }
            }
            cuts.push(hi[last]);
            cuts.sort_by(f64::total_cmp);
            for piece in cuts.windows(2) {
                a[last] = piece[0];
                b[last] = piece[1];
                if b[last] > a[last] {
                    acc += w * self.line(&a[..d], &b[..d], tent, rule);
                }
            }
        }
        acc
    }

    /// Gauss rule along the last coordinate with the others held fixed.
    fn line(&self, a: &[f64], b: &[f64], tent: Option<(&[f64], f64)>, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
        let d = a.len();
        let last = d - 1;
        let mut z = [0.0f64; 8];
        z[..d].copy_from_slice(a);
        let half = 0.5 * (b[last] - a[last]);
        let mut acc = 0.0;
        for (x, w) in rule.0.iter().zip(&rule.1) {
            z[last] = 0.5 * (a[last] + b[last]) + half * x;
            acc += w * self.point(&z[..d], tent);
        }
        acc * half
    }

    #[inline]
    fn point(&self, z: &[f64], tent: Option<(&[f64], f64)>) -> f64 {
        let d = z.len();
        let t = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut v = self.prof.value(t);
        if v == 0.0 {
            return 0.0;
        }
        if let Some((c, h)) = tent {
            for i in 0..d {
                v *= (1.0 - (z[i] - c[i]).abs() / h).max(0.0);
            }
        }
        if !self.g_const {
            let mut xi = [0.0f64; 8];
            for i in 0..d {
                xi[i] = z[i] / t;
            }
            v * self.g.eval(&xi[..d])
        } else {
            v * self.g_value
        }
    }

    fn gauss(&self, lo: &[f64], hi: &[f64], tent: Option<(&[f64], f64)>, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
        let d = lo.len();
        let n = rule.0.len();
        let total = n.pow(d as u32);
        let mut z = [0.0f64; 8];
        let mut acc = 0.0;
        let jac: f64 = (0..d).map(|i| 0.5 * (hi[i] - lo[i])).product();
        for q in 0..total {
            let mut rem = q;
            let mut w = 1.0;
            for i in 0..d {
                let k = rem % n;
                rem /= n;
                z[i] = 0.5 * (lo[i] + hi[i]) + 0.5 * (hi[i] - lo[i]) * rule.0[k];
                w *= rule.1[k];
            }
            acc += w * self.point(&z[..d], tent);
        }
        acc * jac
    }
}

fn radius_range(lo: &[f64], hi: &[f64]) -> (f64, f64) {
    let mut a = 0.0;
    let mut b = 0.0;
    for i in 0..lo.len() {
        let near = if lo[i] > 0.0 {
            lo[i]
        } else if hi[i] < 0.0 {
            -hi[i]
        } else {
            0.0
        };
        let far = lo[i].abs().max(hi[i].abs());
        a += near * near;
        b += far * far;
    }
    (a.sqrt(), b.sqrt())
}

/// Weights `w(m)` for `|m_i| <= half_i`.
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub h: f64,
    pub half: Vec<usize>,
    pub weights: Vec<f64>,
}

impl KernelTable {
    pub fn build<P: RadialProfile>(prof: &P, g: &Anisotropy, d: usize, h: f64, half: &[usize], avg: Averaging) -> Result<Self> {
        if half.len() != d || !(h > 0.0) {
            return invalid("kernel table shape does not match the dimension");
        }
        g.check_dim(d)?;
        let max_depth = if d == 2 { 7 } else if d == 3 { 3 } else { 2 };
        let cub = BoxCubature::new(prof, g, max_depth);
        let ext: Vec<usize> = half.iter().map(|n| 2 * n + 1).collect();
        let total: usize = ext.iter().product();
        let sym = g.is_axis_symmetric();
        let eval = |m: &[isize]| -> f64 {
            let c: Vec<f64> = m.iter().map(|v| *v as f64 * h).collect();
            match avg {
                Averaging::Cell => {
                    let lo: Vec<f64> = c.iter().map(|v| v - 0.5 * h).collect();
                    let hi: Vec<f64> = c.iter().map(|v| v + 0.5 * h).collect();
                    cub.integrate(&lo, &hi, None)
                }
                Averaging::Pair => {
                    let lo: Vec<f64> = c.iter().map(|v| v - h).collect();
                    let hi: Vec<f64> = c.iter().map(|v| v + h).collect();
                    cub.integrate(&lo, &hi, Some((&c, h)))
                }
            }
        };
        let unflat = |mut k: usize, ext: &[usize]| -> Vec<usize> {
            let mut idx = vec![0; ext.len()];
            for i in (0..ext.len()).rev() {
                idx[i] = k % ext[i];
                k /= ext[i];
            }
            idx
        };
        let weights: Vec<f64> = if sym {
            // orthant m >= 0, then mirror
            let qext: Vec<usize> = half.iter().map(|n| n + 1).collect();
            let qtotal: usize = qext.iter().product();
            let quarter: Vec<f64> = (0..qtotal)
                .into_par_iter()
                .map(|k| {
                    let m: Vec<isize> = unflat(k, &qext).iter().map(|v| *v as isize).collect();
                    eval(&m)
                })
                .collect();
            let qstr = strides(&qext);
            (0..total)
                .map(|k| {
                    let idx = unflat(k, &ext);
                    let q: usize = idx.iter().zip(half).zip(&qstr).map(|((i, n), s)| (*i as isize - *n as isize).unsigned_abs() * s).sum();
                    quarter[q]
                })
                .collect()
        } else {
            (0..total)
                .into_par_iter()
                .map(|k| {
                    let m: Vec<isize> = unflat(k, &ext).iter().zip(half).map(|(i, n)| *i as isize - *n as isize).collect();
                    eval(&m)
                })
                .collect()
        };
        Ok(KernelTable { h, half: half.to_vec(), weights })
    }

    pub fn dim(&self) -> usize {
        self.half.len()
    }

    pub fn extent(&self) -> Vec<usize> {
        self.half.iter().map(|n| 2 * n + 1).collect()
    }

    pub fn weight(&self, m: &[isize]) -> f64 {
        let ext = self.extent();
        let mut k = 0usize;
        for i in 0..m.len() {
            let j = m[i] + self.half[i] as isize;
            if j < 0 || j >= ext[i] as isize {
                return 0.0;
            }
            k = k * ext[i] + j as usize;
        }
        self.weights[k]
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().copied().collect::<Sum>().value()
    }
}

pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}
