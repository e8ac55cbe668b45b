//! Nonlocal curvatures `K(x, E) = ∫ (χ_{E^c} - χ_E)(y) g k(x - y) dy`.
//!
//! Bounded sets are integrated on their own side and combined with the total
//! mass: `K = λ - 2 ∫_E g k(x - y) dy`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, unsupported, Result};
use crate::grid::{GridSet, GridSpec};
use crate::kernel_table::BoxCubature;
use crate::kernels::{lambda_total, omega, sigma_scale, Anisotropy, KernelParams};
use crate::perimeter::{covering_grid, nonlocal_perimeter, default_r_max};
use crate::quadrature::{integrate_pieces, Sum};
use crate::shapes::{boundary_samples, cell_fraction, classical_mean_curvature, exact_perimeter, rasterize_with, Coverage, Shape};

/// Lattice and refinement settings for curvature quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadConfig {
    /// Finest cell size; `r / 8` when absent.
    #[serde(default)]
    pub h_local: Option<f64>,
    /// Interactions beyond this distance are dropped and bounded analytically.
    #[serde(default)]
    pub r_max: Option<f64>,
    /// Subdivision depth for cells cut by the boundary.
    #[serde(default)]
    pub depth: Option<usize>,
    /// Cells per half-width of each lattice level.
    #[serde(default)]
    pub cells: Option<usize>,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig { h_local: None, r_max: None, depth: None, cells: None }
    }
}

impl QuadConfig {
    fn h(&self, p: &KernelParams) -> f64 {
        self.h_local.unwrap_or(p.r / 8.0)
    }

    fn depth(&self, d: usize) -> usize {
        self.depth.unwrap_or(if d == 2 { 8 } else { 3 })
    }

    fn cells(&self, d: usize) -> usize {
        let m = self.cells.unwrap_or(if d == 2 { 32 } else { 16 });
        m + m % 2
    }
}

#[derive(Debug, Clone, Copy)]
pub enum QuerySet<'a> {
    Shape(&'a Shape),
    /// A grid set, or its complement when `complement` is set.
    Grid { set: &'a GridSet, complement: bool },
}

#[derive(Debug, Clone)]
pub struct CurvatureQuery<'a> {
    pub x: Vec<f64>,
    pub set: QuerySet<'a>,
    pub p: KernelParams,
    pub g: Anisotropy,
    pub quad: QuadConfig,
}

impl<'a> CurvatureQuery<'a> {
    pub fn shape(shape: &'a Shape, x: &[f64], p: KernelParams, g: Anisotropy) -> Self {
        CurvatureQuery { x: x.to_vec(), set: QuerySet::Shape(shape), p, g, quad: QuadConfig::default() }
    }

    pub fn grid(set: &'a GridSet, complement: bool, x: &[f64], p: KernelParams, g: Anisotropy) -> Self {
        CurvatureQuery { x: x.to_vec(), set: QuerySet::Grid { set, complement }, p, g, quad: QuadConfig::default() }
    }

    pub fn with_quad(mut self, quad: QuadConfig) -> Self {
        self.quad = quad;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureResult {
    pub value: f64,
    pub error_estimate: f64,
}

pub fn nonlocal_curvature(q: &CurvatureQuery) -> Result<CurvatureResult> {
    q.p.validate()?;
    let d = q.p.d;
    q.g.check_dim(d)?;
    if q.x.len() != d {
        return invalid("point dimension does not match d");
    }
    let h = q.quad.h(&q.p);
    if !(h > 0.0) || h > q.p.r / 8.0 * (1.0 + 1e-12) {
        return Err(crate::Error::Guard(format!("h_local <= r/8 violated: h_local = {h}, r = {}", q.p.r)));
    }
    if let Some(rm) = q.quad.r_max {
        if !(rm >= 2.0 * q.p.r) {
            return invalid(format!("R_max must be >= 2r, got {rm}"));
        }
    }
    match q.set {
        QuerySet::Shape(shape) => {
            shape.validate()?;
            if shape.dim() != d {
                return invalid("shape and kernel dimensions differ");
            }
            let dist = shape.sdf(&q.x);
            if dist.abs() > 0.5 * h {
                return domain(format!("x is {dist} away from the boundary, more than h_local/2"));
            }
            if let Shape::HalfSpace { normal, .. } = shape {
                let v = halfspace_curvature(&q.p, &q.g, normal, dist)?;
                return Ok(CurvatureResult { value: v, error_estimate: 1e-10 * v.abs() });
            }
            if shape.bounds().is_none() {
                return unsupported("curvature needs a bounded set or a half-space");
            }
            shape_curvature(shape, q, h)
        }
        QuerySet::Grid { set, complement } => {
            if set.spec.dim() != d {
                return invalid("grid and kernel dimensions differ");
            }
            if set.spec.h > h * (1.0 + 1e-12) {
                return Err(crate::Error::Guard(format!("grid spacing {} exceeds h_local = {h}", set.spec.h)));
            }
            if !near_grid_boundary(set, complement, &q.x) {
                return domain("x is not within h_local/2 of the set boundary");
            }
            let res = grid_curvature(set, q)?;
            Ok(if complement { CurvatureResult { value: -res.value, ..res } } else { res })
        }
    }
}

pub fn scaled_curvature(q: &CurvatureQuery) -> Result<f64> {
    Ok(nonlocal_curvature(q)?.value / sigma_scale(&q.p)?)
}

/// `K` at signed distance `dist` from the plane with the given outward normal.
fn halfspace_curvature(p: &KernelParams, g: &Anisotropy, normal: &[f64], dist: f64) -> Result<f64> {
    if dist == 0.0 {
        return Ok(0.0);
    }
    let n = crate::kernels::norm(normal);
    let nu: Vec<f64> = normal.iter().map(|v| v / n).collect();
    let w = dist.abs();
    let t0 = p.radial_tail(0.0);
    // slab mass ∫_{0 < ν·z < w} g k = ∫_{θ·ν > 0} g(θ) (T(0) - T(w / θ·ν)) dθ
    let slab = match p.d {
        2 => {
            let base = nu[1].atan2(nu[0]);
            let f = |phi: f64| {
                let a = base + phi;
                let c = phi.cos();
                if c <= 0.0 {
                    return 0.0;
                }
                g.eval(&[a.cos(), a.sin()]) * (t0 - p.radial_tail(w / c))
            };
            let mut br = vec![-0.5 * std::f64::consts::PI, 0.0, 0.5 * std::f64::consts::PI];
            if w < p.r {
                let a = (w / p.r).acos();
                br.extend([-a, a]);
            }
            br.sort_by(f64::total_cmp);
            integrate_pieces(f, &br, 1e-12 * t0)
        }
        3 => {
            let gc = match g.constant_value() {
                Some(c) => c,
                None => return unsupported("anisotropic half-space curvature in d = 3"),
            };
            let f = |psi: f64| {
                let c = psi.cos();
                if c <= 0.0 {
                    return 0.0;
                }
                2.0 * std::f64::consts::PI * psi.sin() * (t0 - p.radial_tail(w / c))
            };
            let mut br = vec![0.0, 0.5 * std::f64::consts::PI];
            if w < p.r {
                br.insert(1, (w / p.r).acos());
            }
            gc * integrate_pieces(f, &br, 1e-12 * t0)
        }
        d => return unsupported(format!("half-space curvature in d = {d}")),
    };
    Ok(2.0 * dist.signum() * slab)
}

fn near_grid_boundary(set: &GridSet, complement: bool, x: &[f64]) -> bool {
    let spec = &set.spec;
    let d = spec.dim();
    let h = spec.h;
    let mut inside = false;
    let mut outside = false;
    // cells whose centres lie within h of x in the max norm
    let lo: Vec<isize> = (0..d).map(|i| ((x[i] - spec.origin[i]) / h - 1.5).ceil() as isize).collect();
    let span = 3usize.pow(d as u32);
    for m in 0..span {
        let mut rem = m;
        let mut idx = Vec::with_capacity(d);
        let mut valid = true;
        for i in 0..d {
            let j = lo[i] + (rem % 3) as isize;
            rem /= 3;
            let c = spec.origin[i] + (j as f64 + 0.5) * h;
            if (c - x[i]).abs() > h * (1.0 + 1e-9) {
                valid = false;
            }
            idx.push(j);
        }
        if !valid {
            continue;
        }
        let inside_grid = idx.iter().zip(&spec.dims).all(|(j, n)| *j >= 0 && (*j as usize) < *n);
        let v = if inside_grid {
            let u: Vec<usize> = idx.iter().map(|j| *j as usize).collect();
            set.is_inside(spec.flatten(&u))
        } else {
            false
        };
        if v != complement {
            inside = true;
        } else {
            outside = true;
        }
    }
    inside && outside
}

fn grid_curvature(set: &GridSet, q: &CurvatureQuery) -> Result<CurvatureResult> {
    let p = &q.p;
    let lam = lambda_total(p, &q.g)?;
    let cells = cell_integrals(set, &q.x, p, &q.g, q.quad.r_max);
    let inner: Sum = cells.iter().map(|(k, c)| set.frac[*k] * c).collect();
    let tail = match q.quad.r_max {
        Some(rm) => 2.0 * q.g.sphere_integral(p.d)? * p.radial_tail(rm),
        None => 0.0,
    };
    Ok(CurvatureResult { value: lam - 2.0 * inner.value(), error_estimate: tail + 1e-12 * lam })
}

/// `(cell index, ∫_{cell} g k(x - y) dy)` for occupied cells, in index order.
fn cell_integrals(set: &GridSet, x: &[f64], p: &KernelParams, g: &Anisotropy, r_max: Option<f64>) -> Vec<(usize, f64)> {
    let spec = &set.spec;
    let d = spec.dim();
    let h = spec.h;
    let depth = if d == 2 { 7 } else { 3 };
    let reach = r_max.unwrap_or(f64::INFINITY);
    let occupied: Vec<usize> = (0..set.frac.len()).filter(|k| set.frac[*k] > 0.0).collect();
    occupied
        .par_iter()
        .map(|&k| {
            let cub = BoxCubature::new(p, g, depth);
            let idx = spec.unflatten(k);
            let mut lo = [0.0f64; 8];
            let mut hi = [0.0f64; 8];
            let mut near = 0.0;
            for i in 0..d {
                lo[i] = spec.origin[i] + idx[i] as f64 * h - x[i];
                hi[i] = lo[i] + h;
                let c = if lo[i] > 0.0 {
                    lo[i]
                } else if hi[i] < 0.0 {
                    -hi[i]
                } else {
                    0.0
                };
                near += c * c;
            }
            if near.sqrt() > reach {
                return (k, 0.0);
            }
            (k, cub.integrate(&lo[..d], &hi[..d], None))
        })
        .collect()
}

/// Nested lattice centred at `x`: level `l` has cells of size `h 2^l` filling
/// `[-M h 2^l, M h 2^l]^d` minus the previous level's box.
fn shape_curvature(shape: &Shape, q: &CurvatureQuery, h0: f64) -> Result<CurvatureResult> {
    let p = &q.p;
    let d = p.d;
    let x = &q.x;
    let lam = lambda_total(p, &q.g)?;
    let m = q.quad.cells(d);
    let depth = q.quad.depth(d);
    let (lo, hi) = shape.bounds().unwrap();
    let need = (0..d).map(|i| (x[i] - lo[i]).abs().max((hi[i] - x[i]).abs())).fold(0.0, f64::max);
    let cap = q.quad.r_max.unwrap_or(f64::INFINITY);
    let cub_depth = if d == 2 { 7 } else { 3 };
    let mut fine = Sum::default();
    let mut coarse = Sum::default();
    let mut level = 0;
    let covered;
    loop {
        let hl = h0 * (1u64 << level) as f64;
        let (a, b) = lattice_level(shape, x, p, &q.g, hl, m, level > 0, depth, cub_depth);
        fine.add(a);
        coarse.add(b);
        let w = m as f64 * hl;
        if w >= need {
            covered = f64::INFINITY;
            break;
        }
        if w >= cap {
            covered = w;
            break;
        }
        level += 1;
    }
    let tail = if covered.is_finite() { 2.0 * q.g.sphere_integral(d)? * p.radial_tail(covered) } else { 0.0 };
    let value = lam - 2.0 * fine.value();
    let refine = 2.0 * (fine.value() - coarse.value()).abs();
    Ok(CurvatureResult { value, error_estimate: refine + tail })
}

#[allow(clippy::too_many_arguments)]
fn lattice_level(shape: &Shape, x: &[f64], p: &KernelParams, g: &Anisotropy, hl: f64, m: usize, hollow: bool, depth: usize, cub_depth: usize) -> (f64, f64) {
    let d = x.len();
    let side = 2 * m;
    let total = side.pow(d as u32);
    let half = m as isize;
    let inner = (m / 2) as isize;
    let parts: Vec<(f64, f64)> = (0..total)
        .into_par_iter()
        .map(|k| {
            let mut rem = k;
            let mut idx = [0isize; 8];
            let mut in_hole = hollow;
            for i in (0..d).rev() {
                idx[i] = (rem % side) as isize - half;
                rem /= side;
                if idx[i] < -inner || idx[i] >= inner {
                    in_hole = false;
                }
            }
            if in_hole {
                return (0.0, 0.0);
            }
            let mut lo = [0.0f64; 8];
            let mut hi = [0.0f64; 8];
            for i in 0..d {
                lo[i] = idx[i] as f64 * hl;
                hi[i] = lo[i] + hl;
            }
            let cub = BoxCubature::new(p, g, cub_depth);
            let leaf = LeafCtx { shape, x, p, g, cub: &cub };
            leaf.cell(&lo[..d], &hi[..d], depth)
        })
        .collect();
    let mut a = Sum::default();
    let mut b = Sum::default();
    for (u, v) in parts {
        a.add(u);
        b.add(v);
    }
    (a.value(), b.value())
}

struct LeafCtx<'a, 'b> {
    shape: &'a Shape,
    x: &'a [f64],
    p: &'a KernelParams,
    g: &'a Anisotropy,
    cub: &'b BoxCubature<'a, KernelParams>,
}

impl LeafCtx<'_, '_> {
    /// `(∫_{box ∩ E} g k, same at one level less refinement)` for a box in
    /// coordinates relative to `x`.
    fn cell(&self, lo: &[f64], hi: &[f64], depth: usize) -> (f64, f64) {
        let d = lo.len();
        let size = hi[0] - lo[0];
        let mut c = [0.0f64; 8];
        for i in 0..d {
            c[i] = self.x[i] + 0.5 * (lo[i] + hi[i]);
        }
        let s = self.shape.sdf(&c[..d]);
        let hd = 0.5 * size * (d as f64).sqrt();
        if s > hd {
            return (0.0, 0.0);
        }
        if s < -hd {
            let v = self.cub.integrate(lo, hi, None);
            return (v, v);
        }
        if depth == 0 {
            let v = self.leaf(lo, hi, &c[..d]);
            return (v, v);
        }
        let mut a = 0.0;
        let mut b = 0.0;
        let mut sl = [0.0f64; 8];
        let mut sh = [0.0f64; 8];
        for mask in 0..(1usize << d) {
            for i in 0..d {
                let mid = 0.5 * (lo[i] + hi[i]);
                if mask & (1 << i) == 0 {
                    sl[i] = lo[i];
                    sh[i] = mid;
                } else {
                    sl[i] = mid;
                    sh[i] = hi[i];
                }
            }
            let (u, v) = self.cell(&sl[..d], &sh[..d], depth - 1);
            a += u;
            b += v;
        }
        if depth == 1 {
            b = self.leaf(lo, hi, &c[..d]);
        }
        (a, b)
    }

    /// Plane-cut fraction times the kernel at the box centre.
    fn leaf(&self, lo: &[f64], hi: &[f64], c: &[f64]) -> f64 {
        let d = lo.len();
        let size = hi[0] - lo[0];
        let f = cell_fraction(self.shape, c, size, Coverage::Adaptive { depth: 0 });
        if f == 0.0 {
            return 0.0;
        }
        let mut z = [0.0f64; 8];
        let mut t2 = 0.0;
        for i in 0..d {
            z[i] = 0.5 * (lo[i] + hi[i]);
            t2 += z[i] * z[i];
        }
        let t = t2.sqrt();
        let gv = if t > 0.0 {
            let mut xi = [0.0f64; 8];
            for i in 0..d {
                xi[i] = z[i] / t;
            }
            self.g.eval(&xi[..d])
        } else {
            self.g.constant_value().unwrap_or(1.0)
        };
        f * size.powi(d as i32) * self.p.profile(t) * gv
    }
}

/// The local anisotropic curvature: `2 g(τ) κ` in the plane, `ω_{d-1}` times
/// the mean curvature for isotropic kernels.
pub fn classical_aniso_curvature(g: &Anisotropy, shape: &Shape, x: &[f64]) -> Result<f64> {
    let d = shape.dim();
    g.check_dim(d)?;
    let kappa = classical_mean_curvature(shape, x)?;
    if let Anisotropy::Isotropic = g {
        return Ok(omega(d - 1) * kappa);
    }
    let n = shape.normal_at(x)?;
    let tau = [-n[1], n[0]];
    Ok(2.0 * g.eval(&tau) * kappa)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstVariation {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// Compares `d/dρ J(B_ρ)` by centred differences of grid perimeters with
/// `∫_{∂B_ρ} K(x, B_ρ)` from the curvature lattice.
pub fn first_variation_check(shape: &Shape, p: &KernelParams, g: &Anisotropy, d_rho: f64, h: f64) -> Result<FirstVariation> {
    let Shape::Ball { center, radius } = shape else {
        return invalid("the first-variation check takes a ball");
    };
    if !(d_rho > 0.0 && d_rho < *radius) {
        return invalid("d_rho must lie in (0, radius)");
    }
    let cov = Coverage::Adaptive { depth: 8 };
    let big = Shape::ball(center, radius + d_rho);
    let grid = covering_grid(&big, h, 2)?;
    let jp = nonlocal_perimeter(&rasterize_with(&big, &grid, cov)?, p, g, default_r_max(p.r))?.value;
    let jm = nonlocal_perimeter(&rasterize_with(&Shape::ball(center, radius - d_rho), &grid, cov)?, p, g, default_r_max(p.r))?.value;
    let lhs = (jp - jm) / (2.0 * d_rho);
    let quad = QuadConfig { h_local: Some(h.min(p.r / 8.0)), ..Default::default() };
    let per = exact_perimeter(shape)?;
    let rhs = if g.constant_value().is_some() {
        let mut x = center.clone();
        x[0] += radius;
        per * nonlocal_curvature(&CurvatureQuery::shape(shape, &x, *p, g.clone()).with_quad(quad))?.value
    } else {
        let pts = boundary_samples(shape, 64)?;
        let vals: Vec<f64> = pts
            .iter()
            .map(|b| nonlocal_curvature(&CurvatureQuery::shape(shape, &b.point, *p, g.clone()).with_quad(quad)).map(|r| r.value))
            .collect::<Result<_>>()?;
        per * vals.iter().sum::<f64>() / vals.len() as f64
    };
    Ok(FirstVariation { lhs, rhs, gap: (lhs - rhs).abs() / rhs.abs() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axiom {
    M,
    T,
    S,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomInstance {
    pub axiom: Axiom,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub instances: Vec<AxiomInstance>,
}

impl AxiomReport {
    pub fn passed(&self) -> usize {
        self.instances.iter().filter(|i| i.passed).count()
    }

    pub fn failures(&self) -> Vec<&AxiomInstance> {
        self.instances.iter().filter(|i| !i.passed).collect()
    }
}

pub const AXIOM_INSTANCES: usize = 50;

/// Randomized monotonicity, translation, symmetry and ball-positivity checks.
///
/// Grid instances use `p` on random planar sets with spacing `p.r / 8`; ball
/// instances cycle through radii `{0.25, 1, 4}` and core radii `{0.01, 0.1}`.
pub fn axiom_suite(p: &KernelParams, g: &Anisotropy, seed: u64) -> Result<AxiomReport> {
    p.validate()?;
    if p.d != 2 {
        return unsupported("the axiom suite runs in the plane");
    }
    g.check_dim(2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(4 * AXIOM_INSTANCES);
    let h = p.r / 8.0;
    let n = 40;
    let spec = GridSpec::new(vec![0.0, 0.0], h, vec![n, n])?;
    let lam = lambda_total(p, g)?;
    for i in 0..AXIOM_INSTANCES {
        let (e, x) = random_blob(&spec, &mut rng);
        // (M): grow the set away from x
        let mut f = e.clone();
        for (k, v) in f.frac.iter_mut().enumerate() {
            let c = spec.center(&spec.unflatten(k));
            if crate::shapes::dist2(&c, &x).sqrt() > 3.0 * h && rng.gen_bool(0.3) {
                *v += rng.gen::<f64>() * (1.0 - *v);
            }
        }
        let ke = nonlocal_curvature(&CurvatureQuery::grid(&e, false, &x, *p, g.clone()))?.value;
        let kf = nonlocal_curvature(&CurvatureQuery::grid(&f, false, &x, *p, g.clone()))?.value;
        out.push(AxiomInstance {
            axiom: Axiom::M,
            passed: kf <= ke + 1e-12 * lam,
            detail: format!("instance {i}: K(x, F) = {kf}, K(x, E) = {ke}"),
        });
    }
    for i in 0..AXIOM_INSTANCES {
        let (e, x) = random_blob(&spec, &mut rng);
        // keep the shifted set inside the box
        let (slo, shi) = e.support().expect("blob is nonempty");
        let shift: Vec<isize> = (0..2).map(|a| rng.gen_range(-(slo[a].min(6) as isize)..=((n - shi[a]).min(6) as isize))).collect();
        let moved = e.shifted(&shift);
        let y = [x[0] + shift[0] as f64 * h, x[1] + shift[1] as f64 * h];
        let a = nonlocal_curvature(&CurvatureQuery::grid(&e, false, &x, *p, g.clone()))?.value;
        let b = nonlocal_curvature(&CurvatureQuery::grid(&moved, false, &y, *p, g.clone()))?.value;
        out.push(AxiomInstance {
            axiom: Axiom::T,
            passed: (a - b).abs() <= 1e-10 * a.abs().max(1.0),
            detail: format!("instance {i}: shift {shift:?}, {a} vs {b}"),
        });
    }
    for i in 0..AXIOM_INSTANCES {
        let (e, x) = random_blob(&spec, &mut rng);
        let a = nonlocal_curvature(&CurvatureQuery::grid(&e, false, &x, *p, g.clone()))?.value;
        let b = complement_curvature(&e, &x, p, g)?;
        out.push(AxiomInstance {
            axiom: Axiom::S,
            passed: (a + b).abs() <= 1e-9,
            detail: format!("instance {i}: K(x, E) = {a}, K(x, E^c) = {b}"),
        });
    }
    let radii = [0.25, 1.0, 4.0];
    let cores = [0.01, 0.1];
    for i in 0..AXIOM_INSTANCES {
        let rho = radii[i % 3];
        let pr = p.with_r(cores[(i / 3) % 2]);
        let th = rng.gen::<f64>() * std::f64::consts::TAU;
        let ball = Shape::ball(&[0.0, 0.0], rho);
        let x = [rho * th.cos(), rho * th.sin()];
        let k = nonlocal_curvature(&CurvatureQuery::shape(&ball, &x, pr, g.clone()))?.value;
        out.push(AxiomInstance {
            axiom: Axiom::B,
            passed: k >= 0.0,
            detail: format!("instance {i}: rho = {rho}, r = {}, theta = {th}, K = {k}", pr.r),
        });
    }
    Ok(AxiomReport { instances: out })
}

/// `K(x, E^c)` with `E^c` split into the in-box complement and the outside of
/// the box, whose mass is `λ` minus the box integral on the same cells.
fn complement_curvature(e: &GridSet, x: &[f64], p: &KernelParams, g: &Anisotropy) -> Result<f64> {
    let lam = lambda_total(p, g)?;
    let full = GridSet::new(e.spec.clone(), vec![1.0; e.frac.len()])?;
    let cells = cell_integrals(&full, x, p, g, None);
    let inbox = e.complement();
    let within: Sum = cells.iter().map(|(k, c)| inbox.frac[*k] * c).collect();
    let box_mass: Sum = cells.iter().map(|(_, c)| *c).collect();
    let outside = lam - box_mass.value();
    Ok(lam - 2.0 * (within.value() + outside))
}

/// A random union of discs inside the grid box with a boundary point.
fn random_blob(spec: &GridSpec, rng: &mut ChaCha8Rng) -> (GridSet, Vec<f64>) {
    let (lo, hi) = spec.extent();
    let w = hi[0] - lo[0];
    let parts: Vec<Shape> = (0..rng.gen_range(1..=3))
        .map(|_| {
            let c = [lo[0] + w * rng.gen_range(0.35..0.65), lo[1] + w * rng.gen_range(0.35..0.65)];
            Shape::ball(&c, w * rng.gen_range(0.1..0.25))
        })
        .collect();
    let shape = Shape::Union { parts };
    let set = rasterize_with(&shape, spec, Coverage::Adaptive { depth: 3 }).expect("blob fits the grid");
    // a face midpoint between an inside and an outside cell
    let d = spec.dim();
    let mut faces = Vec::new();
    for k in 0..set.frac.len() {
        let idx = spec.unflatten(k);
        if !set.is_inside(k) || idx.iter().zip(&spec.dims).any(|(j, n)| *j + 1 >= *n) {
            continue;
        }
        for axis in 0..d {
            let mut nb = idx.clone();
            nb[axis] += 1;
            if !set.is_inside(spec.flatten(&nb)) {
                let mut c = spec.center(&idx);
                c[axis] += 0.5 * spec.h;
                faces.push(c);
            }
        }
    }
    let x = faces[rng.gen_range(0..faces.len())].clone();
    (set, x)
}
