//! The nonlocal perimeter `∫_E ∫_{E^c} k(x - y)` on occupancy grids, its
//! near/far decomposition and the small-radius scaling sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Result};
use crate::fftconv::{convolve_direct, Convolver};
use crate::grid::{GridSet, GridSpec};
use crate::kernel_table::{Averaging, BandDifference, KernelTable, RadialProfile, Truncated};
use crate::kernels::{beta_scale, lambda_total, sigma_scale, Anisotropy, KernelParams};
use crate::quadrature::{affine_fit, Sum};
use crate::shapes::{cell_fraction, Coverage, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerimeterResult {
    pub value: f64,
    pub tail_bound: f64,
    pub r: f64,
    pub s: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConvolutionPath {
    #[default]
    Auto,
    Direct,
    Fft,
}

/// Sets with at most this many occupied cells use the direct double sum
/// under `ConvolutionPath::Auto`.
const DIRECT_LIMIT: usize = 256;

pub fn default_r_max(r: f64) -> f64 {
    (8.0 * r).max(4.0)
}

pub fn nonlocal_perimeter(e: &GridSet, p: &KernelParams, g: &Anisotropy, r_max: f64) -> Result<PerimeterResult> {
    nonlocal_perimeter_with(e, p, g, r_max, ConvolutionPath::Auto)
}

pub fn nonlocal_perimeter_with(e: &GridSet, p: &KernelParams, g: &Anisotropy, r_max: f64, path: ConvolutionPath) -> Result<PerimeterResult> {
    p.validate()?;
    check_dims(e, p, g)?;
    if !(r_max >= 2.0 * p.r) {
        return invalid(format!("R_max must be >= 2r, got R_max = {r_max}, r = {}", p.r));
    }
    let h = e.spec.h;
    let lam = lambda_total(p, g)?;
    let tail_per_volume = g.sphere_integral(p.d)? * p.radial_tail(r_max);
    let prof = Truncated { p: *p, inner: 0.0, outer: r_max };
    let inter = self_interaction(e, &prof, g, r_max, path)?;
    let measure = e.measure();
    let value = if measure == 0.0 { 0.0 } else { lam * measure - inter };
    Ok(PerimeterResult { value, tail_bound: measure * tail_per_volume, r: p.r, s: p.s, h })
}

fn check_dims(e: &GridSet, p: &KernelParams, g: &Anisotropy) -> Result<()> {
    if e.spec.dim() != p.d {
        return invalid(format!("grid dimension {} does not match d = {}", e.spec.dim(), p.d));
    }
    g.check_dim(p.d)
}

/// `h^d Σ_i f_i Σ_j w(i - j) f_j` over the support box of `e` for a pair table
/// of the given profile, truncated at `reach`.
fn self_interaction<P: RadialProfile>(e: &GridSet, prof: &P, g: &Anisotropy, reach: f64, path: ConvolutionPath) -> Result<f64> {
    let Some((lo, hi)) = e.support() else {
        return Ok(0.0);
    };
    let d = e.spec.dim();
    let h = e.spec.h;
    let dims: Vec<usize> = lo.iter().zip(&hi).map(|(a, b)| b - a).collect();
    let sub = crop(e, &lo, &dims);
    let reach_cells = (reach / h).ceil() as usize + 1;
    let half: Vec<usize> = dims.iter().map(|n| (n - 1).min(reach_cells)).collect();
    let table = KernelTable::build(prof, g, d, h, &half, Averaging::Pair)?;
    let occupied = sub.iter().filter(|f| **f > 0.0).count();
    let direct = match path {
        ConvolutionPath::Direct => true,
        ConvolutionPath::Fft => false,
        ConvolutionPath::Auto => occupied <= DIRECT_LIMIT,
    };
    let c = if direct { convolve_direct(&dims, &sub, &table) } else { Convolver::new(&dims, &table)?.apply(&sub) };
    let s: Sum = sub.iter().zip(&c).map(|(f, v)| f * v).collect();
    Ok(e.spec.cell_volume() * s.value())
}

fn crop(e: &GridSet, lo: &[usize], dims: &[usize]) -> Vec<f64> {
    let d = dims.len();
    let total: usize = dims.iter().product();
    let mut out = vec![0.0; total];
    let mut idx = vec![0usize; d];
    for (k, o) in out.iter_mut().enumerate() {
        let mut rem = k;
        for i in (0..d).rev() {
            idx[i] = lo[i] + rem % dims[i];
            rem /= dims[i];
        }
        *o = e.frac[e.spec.flatten(&idx)];
    }
    out
}

/// Far (`|x - y| > 1`) and near (`|x - y| <= 1`) parts of the perimeter.
pub fn decompose_fg(e: &GridSet, p: &KernelParams, g: &Anisotropy) -> Result<(f64, f64)> {
    p.validate()?;
    check_dims(e, p, g)?;
    if !(p.r < 1.0) {
        return domain(format!("the decomposition requires r < 1, got {}", p.r));
    }
    let measure = e.measure();
    if measure == 0.0 {
        return Ok((0.0, 0.0));
    }
    let sphere = g.sphere_integral(p.d)?;
    let lam = lambda_total(p, g)?;
    let lam_far = sphere * p.radial_tail(1.0);
    let diam = support_diameter(e);
    let far = Truncated { p: *p, inner: 1.0, outer: f64::INFINITY };
    let near = Truncated { p: *p, inner: 0.0, outer: 1.0 };
    let f = lam_far * measure - self_interaction(e, &far, g, diam, ConvolutionPath::Auto)?;
    let gv = (lam - lam_far) * measure - self_interaction(e, &near, g, 1.0, ConvolutionPath::Auto)?;
    Ok((f, gv))
}

fn support_diameter(e: &GridSet) -> f64 {
    match e.support() {
        None => 0.0,
        Some((lo, hi)) => lo.iter().zip(&hi).map(|(a, b)| ((b - a) as f64 * e.spec.h).powi(2)).sum::<f64>().sqrt(),
    }
}

pub fn scaled_perimeter(e: &GridSet, p: &KernelParams, g: &Anisotropy) -> Result<f64> {
    let v = nonlocal_perimeter(e, p, g, default_r_max(p.r))?;
    Ok(v.value / sigma_scale(p)?)
}

/// Grid spacing as a function of the core radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum HRule {
    /// `h = r / ratio`.
    Ratio { ratio: f64 },
    Fixed { h: f64 },
}

impl Default for HRule {
    fn default() -> Self {
        HRule::Ratio { ratio: 8.0 }
    }
}

impl HRule {
    pub fn h(&self, r: f64) -> f64 {
        match self {
            HRule::Ratio { ratio } => r / ratio,
            HRule::Fixed { h } => *h,
        }
    }

    /// Refuses spacings that leave fewer than four cells across the core.
    pub fn check(&self, r: f64) -> Result<f64> {
        let h = self.h(r);
        if !(h > 0.0) || h > r / 4.0 * (1.0 + 1e-12) {
            return Err(crate::Error::Guard(format!("h <= r/4 violated: h = {h}, r = {r}")));
        }
        Ok(h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Every row on a full grid covering the shape.
    #[default]
    Full,
    /// First row on a full grid, later rows by band increments on boundary tiles.
    Telescoping,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub coverage: Coverage,
    pub mode: SweepMode,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { coverage: Coverage::Adaptive { depth: 4 }, mode: SweepMode::Full }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub r: f64,
    pub s: f64,
    pub h: f64,
    pub value: f64,
    pub scaled_value: f64,
    pub tail_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// `value ≈ slope·scale + intercept` with the row's scale (σ or β).
    pub fit: Fit,
}

/// Perimeter of a shape rasterized on a grid covering it with spacing `h`.
pub fn shape_perimeter(shape: &Shape, p: &KernelParams, g: &Anisotropy, h: f64, coverage: Coverage) -> Result<PerimeterResult> {
    let grid = covering_grid(shape, h, 2)?;
    let e = crate::shapes::rasterize_with(shape, &grid, coverage)?;
    nonlocal_perimeter(&e, p, g, default_r_max(p.r))
}

pub fn covering_grid(shape: &Shape, h: f64, margin: usize) -> Result<GridSpec> {
    let Some((lo, hi)) = shape.bounds() else {
        return invalid("sweeps need a bounded shape");
    };
    GridSpec::covering(&lo, &hi, h, margin)
}

pub fn perimeter_sweep(shape: &Shape, s: f64, r_list: &[f64], h_rule: HRule, g: &Anisotropy, opts: SweepOptions) -> Result<SweepResult> {
    shape.validate()?;
    let d = shape.dim();
    check_decreasing(r_list)?;
    let hs: Vec<f64> = r_list.iter().map(|r| h_rule.check(*r)).collect::<Result<_>>()?;
    let params: Vec<KernelParams> = r_list.iter().map(|r| KernelParams::new(d, s, *r)).collect::<Result<_>>()?;
    let results: Vec<PerimeterResult> = match opts.mode {
        SweepMode::Full => params.iter().zip(&hs).map(|(p, h)| shape_perimeter(shape, p, g, *h, opts.coverage)).collect::<Result<_>>()?,
        SweepMode::Telescoping => telescoped(shape, &params, &hs, g, opts.coverage)?,
    };
    let mut rows = Vec::with_capacity(results.len());
    for (p, res) in params.iter().zip(&results) {
        let sigma = sigma_scale(p)?;
        rows.push(SweepRow { r: p.r, s, h: res.h, value: res.value, scaled_value: res.value / sigma, tail_bound: res.tail_bound });
    }
    let x: Vec<f64> = params.iter().map(sigma_scale).collect::<Result<_>>()?;
    let y: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let (slope, intercept, residual) = affine_fit(&x, &y);
    Ok(SweepResult { rows, fit: Fit { slope, intercept, residual } })
}

fn check_decreasing(r_list: &[f64]) -> Result<()> {
    if r_list.is_empty() {
        return invalid("r_list is empty");
    }
    for (i, r) in r_list.iter().enumerate() {
        if !(*r > 0.0) {
            return invalid(format!("r must be > 0 (entry {i})"));
        }
    }
    if r_list.windows(2).any(|w| !(w[1] < w[0])) {
        return invalid("r_list must be strictly decreasing");
    }
    Ok(())
}

/// Values for decreasing radii: the first on a full grid, each later one as
/// the previous value plus the band increment at the finer spacing.
pub fn telescoped(shape: &Shape, params: &[KernelParams], hs: &[f64], g: &Anisotropy, coverage: Coverage) -> Result<Vec<PerimeterResult>> {
    let first = shape_perimeter(shape, &params[0], g, hs[0], coverage)?;
    let mut out = vec![first];
    for k in 1..params.len() {
        let inc = band_increment(shape, &params[k], &params[k - 1], g, hs[k], coverage)?;
        let prev = out[k - 1];
        out.push(PerimeterResult { value: prev.value + inc, tail_bound: prev.tail_bound, r: params[k].r, s: params[k].s, h: hs[k] });
    }
    Ok(out)
}

const TILE: usize = 48;

/// `∫_E ∫_{E^c} (k_fine - k_coarse)`, evaluated on boundary tiles at spacing `h`.
pub fn band_increment(shape: &Shape, fine: &KernelParams, coarse: &KernelParams, g: &Anisotropy, h: f64, coverage: Coverage) -> Result<f64> {
    if !(fine.r < coarse.r) || fine.s != coarse.s || fine.d != coarse.d {
        return invalid("band increment needs matching kernels with r_fine < r_coarse");
    }
    let d = fine.d;
    g.check_dim(d)?;
    let Some((lo, hi)) = shape.bounds() else {
        return invalid("band increments need a bounded shape");
    };
    let reach = coarse.r;
    let prof = BandDifference { fine: *fine, coarse: *coarse };
    let n = (reach / h).ceil() as usize + 1;
    let table = KernelTable::build(&prof, g, d, h, &vec![n; d], Averaging::Pair)?;
    let w_total = table.total();
    let ext = 2 * n + 1;
    // only tiles near the boundary are rasterized, so the cap does not apply
    let grid = GridSpec::covering_with_cap(&lo, &hi, h, 2, usize::MAX)?;
    let tiles: Vec<usize> = grid.dims.iter().map(|m| m.div_ceil(TILE)).collect();
    let n_tiles: usize = tiles.iter().product();
    let win = TILE + 2 * n;
    let wstr = crate::kernel_table::strides(&vec![win; d]);
    // nonzero taps as (offset in window strides, weight)
    let taps: Vec<(isize, f64)> = (0..table.weights.len())
        .filter(|k| table.weights[*k] != 0.0)
        .map(|k| {
            let mut rem = k;
            let mut off = 0isize;
            for i in (0..d).rev() {
                let m = (rem % ext) as isize - n as isize;
                rem /= ext;
                off += m * wstr[i] as isize;
            }
            (off, table.weights[k])
        })
        .collect();
    let tile_diag = TILE as f64 * h * (d as f64).sqrt();
    let cell_diag = h * (d as f64).sqrt();
    let parts: Vec<f64> = (0..n_tiles)
        .into_par_iter()
        .map(|t| {
            let mut tidx = vec![0usize; d];
            let mut rem = t;
            for i in (0..d).rev() {
                tidx[i] = rem % tiles[i];
                rem /= tiles[i];
            }
            let centre: Vec<f64> = (0..d).map(|i| grid.origin[i] + (tidx[i] * TILE) as f64 * h + 0.5 * TILE as f64 * h).collect();
            if shape.sdf(&centre).abs() > 0.5 * tile_diag + reach + 2.0 * cell_diag {
                return 0.0;
            }
            // window cell j has global index tidx*TILE - n + j
            let wtotal = win.pow(d as u32);
            let mut f = vec![0.0; wtotal];
            let mut deep = vec![false; wtotal];
            let mut c = vec![0.0; d];
            for (k, fv) in f.iter_mut().enumerate() {
                let mut rem = k;
                for i in (0..d).rev() {
                    let j = rem % win;
                    rem /= win;
                    c[i] = grid.origin[i] + ((tidx[i] * TILE) as f64 + j as f64 - n as f64 + 0.5) * h;
                }
                let s = shape.sdf(&c);
                deep[k] = s < -(reach + cell_diag);
                *fv = if s > 0.5 * cell_diag {
                    0.0
                } else if s < -0.5 * cell_diag {
                    1.0
                } else {
                    cell_fraction(shape, &c, h, coverage)
                };
            }
            let mut acc = Sum::default();
            let tot = TILE.pow(d as u32);
            for q in 0..tot {
                let mut rem = q;
                let mut k = 0usize;
                for i in (0..d).rev() {
                    let j = rem % TILE + n;
                    rem /= TILE;
                    k += j * wstr[i];
                }
                let fi = f[k];
                if fi == 0.0 || deep[k] {
                    continue;
                }
                let mut inside = 0.0;
                for (off, w) in &taps {
                    inside += w * f[(k as isize + off) as usize];
                }
                acc.add(fi * (w_total - inside));
            }
            acc.value()
        })
        .collect();
    let total: Sum = parts.into_iter().collect();
    Ok(grid.cell_volume() * total.value())
}

/// Rows `J̃^{s_n}_{r_n}(E) / β(r_n, s_n)` along a path with `s_n > 1`.
///
/// Each row is telescoped from `r_start` by halving the radius.
pub fn joint_sweep(shape: &Shape, path: &[(f64, f64)], h_rule: HRule, g: &Anisotropy, r_start: f64, coverage: Coverage) -> Result<SweepResult> {
    shape.validate()?;
    let d = shape.dim();
    if path.is_empty() {
        return invalid("joint sweep path is empty");
    }
    for (i, (r, s)) in path.iter().enumerate() {
        if !(*s > 1.0) {
            return domain(format!("s must be > 1 along the path (entry {i})"));
        }
        if !(*r > 0.0 && *r < 1.0) {
            return domain(format!("r must lie in (0, 1) along the path (entry {i})"));
        }
    }
    let rs: Vec<f64> = path.iter().map(|(r, _)| *r).collect();
    check_decreasing(&rs)?;
    let rows: Vec<SweepRow> = path
        .iter()
        .map(|&(r, s)| {
            let chain = halving_chain(r_start.max(r), r);
            let params: Vec<KernelParams> = chain.iter().map(|ri| KernelParams::new(d, s, *ri)).collect::<Result<_>>()?;
            let hs: Vec<f64> = chain.iter().map(|ri| h_rule.check(*ri)).collect::<Result<_>>()?;
            let res = telescoped(shape, &params, &hs, g, coverage)?;
            let last = *res.last().unwrap();
            let beta = beta_scale(d, s, r)?;
            Ok(SweepRow { r, s, h: last.h, value: last.value, scaled_value: last.value / beta, tail_bound: last.tail_bound })
        })
        .collect::<Result<_>>()?;
    let x: Vec<f64> = path.iter().map(|(r, s)| beta_scale(d, *s, *r)).collect::<Result<_>>()?;
    let y: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let (slope, intercept, residual) = affine_fit(&x, &y);
    Ok(SweepResult { rows, fit: Fit { slope, intercept, residual } })
}

/// `start, start/2, ...` down to `end`; a remainder within 1.25 of `end` is
/// merged into the last step, so that step divides by at most 2.5.
pub fn halving_chain(start: f64, end: f64) -> Vec<f64> {
    let mut v = vec![start];
    let mut r = start;
    while r > end * (1.0 + 1e-12) {
        r = (0.5 * r).max(end);
        if r < end * 1.25 && r > end {
            r = end;
        }
        v.push(r);
    }
    v
}

/// The path `s_n = 1 + 1/|log r_n|`.
pub fn inverse_log_path(r_list: &[f64]) -> Vec<(f64, f64)> {
    r_list.iter().map(|r| (*r, 1.0 + 1.0 / r.ln().abs())).collect()
}

/// The path `s_n = 1 + log|log r_n| / |log r_n|`.
pub fn loglog_path(r_list: &[f64]) -> Vec<(f64, f64)> {
    r_list.iter().map(|r| (*r, 1.0 + r.ln().abs().ln() / r.ln().abs())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::rasterize_with;
    use std::f64::consts::PI;

    fn disc(h: f64) -> GridSet {
        let s = Shape::ball(&[0.0, 0.0], 1.0);
        rasterize_with(&s, &covering_grid(&s, h, 2).unwrap(), Coverage::Adaptive { depth: 4 }).unwrap()
    }

    #[test]
    fn empty_set_is_zero() {
        let g = GridSpec::new(vec![0.0, 0.0], 0.1, vec![10, 10]).unwrap();
        let p = KernelParams::new(2, 2.0, 0.4).unwrap();
        let r = nonlocal_perimeter(&GridSet::empty(g), &p, &Anisotropy::Isotropic, 4.0).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.tail_bound, 0.0);
    }

    #[test]
    fn r_max_guard() {
        let g = GridSpec::new(vec![0.0, 0.0], 0.1, vec![10, 10]).unwrap();
        let p = KernelParams::new(2, 2.0, 0.4).unwrap();
        assert!(nonlocal_perimeter(&GridSet::empty(g), &p, &Anisotropy::Isotropic, 0.5).is_err());
    }

    #[test]
    fn paths_agree_on_small_blob() {
        let g = GridSpec::new(vec![0.0, 0.0], 0.1, vec![8, 8]).unwrap();
        let mut e = GridSet::empty(g);
        for (k, v) in [(18, 1.0), (19, 0.5), (26, 1.0), (27, 0.25), (35, 0.75)] {
            e.frac[k] = v;
        }
        let p = KernelParams::new(2, 1.0, 0.2).unwrap();
        let a = nonlocal_perimeter_with(&e, &p, &Anisotropy::Isotropic, 4.0, ConvolutionPath::Direct).unwrap();
        let b = nonlocal_perimeter_with(&e, &p, &Anisotropy::Isotropic, 4.0, ConvolutionPath::Fft).unwrap();
        assert!((a.value - b.value).abs() < 1e-10 * a.value);
    }

    #[test]
    fn disc_s2_close_to_limit() {
        let p = KernelParams::new(2, 2.0, 0.08).unwrap();
        let e = disc(p.r / 8.0);
        let v = nonlocal_perimeter(&e, &p, &Anisotropy::Isotropic, 4.0).unwrap();
        let ratio = v.value / sigma_scale(&p).unwrap() / (4.0 * PI);
        assert!((ratio - 0.9766).abs() < 4e-3, "{ratio}");
    }

    #[test]
    fn fg_identity_and_bound() {
        let p = KernelParams::new(2, 2.0, 0.1).unwrap();
        let e = disc(p.r / 8.0);
        let (f, gv) = decompose_fg(&e, &p, &Anisotropy::Isotropic).unwrap();
        let j = nonlocal_perimeter(&e, &p, &Anisotropy::Isotropic, 4.0).unwrap().value;
        assert!(((f + gv) - j).abs() <= 1e-8 * j, "{} {}", f + gv, j);
        assert!(f <= 2.0 * PI / p.s * e.measure());
        assert!(decompose_fg(&e, &p.with_r(1.0), &Anisotropy::Isotropic).is_err());
    }

    #[test]
    fn band_increment_matches_full_grid_difference() {
        let shape = Shape::ball(&[0.0, 0.0], 0.5);
        let p0 = KernelParams::new(2, 1.0, 0.1).unwrap();
        let p1 = p0.with_r(0.05);
        let h = p1.r / 6.0;
        let cov = Coverage::Adaptive { depth: 4 };
        let a = shape_perimeter(&shape, &p0, &Anisotropy::Isotropic, h, cov).unwrap().value;
        let b = shape_perimeter(&shape, &p1, &Anisotropy::Isotropic, h, cov).unwrap().value;
        let inc = band_increment(&shape, &p1, &p0, &Anisotropy::Isotropic, h, cov).unwrap();
        assert!(((b - a) - inc).abs() < 1e-9 * b, "{} {}", b - a, inc);
    }

    #[test]
    fn chain_halves() {
        let c = halving_chain(0.125, 0.001);
        assert_eq!(c[0], 0.125);
        assert_eq!(*c.last().unwrap(), 0.001);
        assert!(c.windows(2).all(|w| w[1] < w[0] && w[1] >= 0.5 * w[0] - 1e-15));
        assert_eq!(halving_chain(0.1, 0.1), vec![0.1]);
    }

    #[test]
    fn h_rule_guard() {
        assert!(HRule::Ratio { ratio: 3.0 }.check(0.1).is_err());
        assert!(HRule::Ratio { ratio: 4.0 }.check(0.1).is_ok());
        assert!(HRule::Fixed { h: 0.01 }.check(0.02).is_err());
    }
}
