//! Analytic test geometry: membership, signed distances, exact measures,
//! boundary samples and rasterization to occupancy grids.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, unsupported, Error, Result};
use crate::grid::{GridSet, GridSpec};
use crate::kernels::{norm, omega, phi_density, Anisotropy, DEFAULT_PHI_ORDER};
use crate::quadrature::{cube_halfspace_fraction, integrate_pieces};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Ball { center: Vec<f64>, radius: f64 },
    Rectangle { min: Vec<f64>, max: Vec<f64> },
    /// Axis-aligned planar ellipse.
    Ellipse { center: Vec<f64>, semi_axes: Vec<f64> },
    Annulus { center: Vec<f64>, r_in: f64, r_out: f64 },
    /// `{y : (y - point)·normal <= 0}`.
    HalfSpace { point: Vec<f64>, normal: Vec<f64> },
    Union { parts: Vec<Shape> },
    Difference { a: Box<Shape>, b: Box<Shape> },
    Translate { shape: Box<Shape>, offset: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySample {
    pub point: Vec<f64>,
    pub normal: Vec<f64>,
}

/// How fractional occupancy of boundary cells is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Coverage {
    /// `n^d` stratified membership samples per boundary cell.
    Stratified { n: usize },
    /// Recursive bisection with a planar cut at the finest level.
    Adaptive { depth: usize },
}

impl Default for Coverage {
    fn default() -> Self {
        Coverage::Stratified { n: 4 }
    }
}

impl Shape {
    pub fn ball(center: &[f64], radius: f64) -> Self {
        Shape::Ball { center: center.to_vec(), radius }
    }

    pub fn rectangle(min: &[f64], max: &[f64]) -> Self {
        Shape::Rectangle { min: min.to_vec(), max: max.to_vec() }
    }

    pub fn ellipse(center: &[f64], a: f64, b: f64) -> Self {
        Shape::Ellipse { center: center.to_vec(), semi_axes: vec![a, b] }
    }

    pub fn annulus(center: &[f64], r_in: f64, r_out: f64) -> Self {
        Shape::Annulus { center: center.to_vec(), r_in, r_out }
    }

    pub fn half_space(point: &[f64], normal: &[f64]) -> Self {
        Shape::HalfSpace { point: point.to_vec(), normal: normal.to_vec() }
    }

    pub fn translate(self, offset: &[f64]) -> Self {
        Shape::Translate { shape: Box::new(self), offset: offset.to_vec() }
    }

    pub fn dim(&self) -> usize {
        match self {
            Shape::Ball { center, .. } | Shape::Ellipse { center, .. } | Shape::Annulus { center, .. } => center.len(),
            Shape::Rectangle { min, .. } => min.len(),
            Shape::HalfSpace { point, .. } => point.len(),
            Shape::Union { parts } => parts.first().map(|p| p.dim()).unwrap_or(0),
            Shape::Difference { a, .. } => a.dim(),
            Shape::Translate { shape, .. } => shape.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d < 2 {
            return invalid("shapes need dimension >= 2");
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Shape::Ball { center, radius } => {
                if !(*radius > 0.0) || !finite(center) {
                    return invalid("ball radius must be > 0");
                }
            }
            Shape::Rectangle { min, max } => {
                if min.len() != max.len() || !finite(min) || !finite(max) || min.iter().zip(max).any(|(a, b)| !(a < b)) {
                    return invalid("rectangle needs min < max componentwise");
                }
            }
            Shape::Ellipse { center, semi_axes } => {
                if center.len() != 2 || semi_axes.len() != 2 {
                    return invalid("ellipse is planar");
                }
                if semi_axes.iter().any(|a| !(*a > 0.0)) || !finite(center) {
                    return invalid("ellipse semi-axes must be > 0");
                }
            }
            Shape::Annulus { center, r_in, r_out } => {
                if !(*r_in > 0.0) || !(r_in < r_out) || !finite(center) {
                    return invalid("annulus needs 0 < r_in < r_out");
                }
            }
            Shape::HalfSpace { point, normal } => {
                if point.len() != normal.len() || norm(normal) == 0.0 || !finite(point) || !finite(normal) {
                    return invalid("half-space needs a nonzero normal of matching dimension");
                }
            }
            Shape::Union { parts } => {
                if parts.is_empty() {
                    return invalid("union needs at least one part");
                }
                for p in parts {
                    p.validate()?;
                    if p.dim() != d {
                        return invalid("union parts must share a dimension");
                    }
                }
            }
            Shape::Difference { a, b } => {
                a.validate()?;
                b.validate()?;
                if a.dim() != b.dim() {
                    return invalid("difference operands must share a dimension");
                }
            }
            Shape::Translate { shape, offset } => {
                shape.validate()?;
                if offset.len() != shape.dim() || !finite(offset) {
                    return invalid("translation vector has the wrong dimension");
                }
            }
        }
        Ok(())
    }

    /// Closed-set membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Shape::Ball { center, radius } => dist2(x, center) <= radius * radius,
            Shape::Rectangle { min, max } => x.iter().zip(min.iter().zip(max)).all(|(v, (a, b))| *a <= *v && *v <= *b),
            Shape::Ellipse { center, semi_axes } => {
                let u = (x[0] - center[0]) / semi_axes[0];
                let v = (x[1] - center[1]) / semi_axes[1];
                u * u + v * v <= 1.0
            }
            Shape::Annulus { center, r_in, r_out } => {
                let q = dist2(x, center);
                r_in * r_in <= q && q <= r_out * r_out
            }
            Shape::HalfSpace { point, normal } => x.iter().zip(point).zip(normal).map(|((a, b), n)| (a - b) * n).sum::<f64>() <= 0.0,
            Shape::Union { parts } => parts.iter().any(|p| p.contains(x)),
            Shape::Difference { a, b } => a.contains(x) && !b.contains(x),
            Shape::Translate { shape, offset } => {
                let y: Vec<f64> = x.iter().zip(offset).map(|(a, b)| a - b).collect();
                shape.contains(&y)
            }
        }
    }

    /// Signed distance, negative inside. Exact for primitives; for unions and
    /// differences the magnitude is a lower bound on the true distance.
    pub fn sdf(&self, x: &[f64]) -> f64 {
        match self {
            Shape::Ball { center, radius } => dist2(x, center).sqrt() - radius,
            Shape::Rectangle { min, max } => {
                let mut out = 0.0;
                let mut inside = f64::NEG_INFINITY;
                for i in 0..x.len() {
                    let c = 0.5 * (min[i] + max[i]);
                    let hw = 0.5 * (max[i] - min[i]);
                    let q = (x[i] - c).abs() - hw;
                    if q > 0.0 {
                        out += q * q;
                    }
                    inside = inside.max(q);
                }
                if out > 0.0 {
                    out.sqrt()
                } else {
                    inside
                }
            }
            Shape::Ellipse { center, semi_axes } => {
                let (dist, _) = ellipse_closest(semi_axes[0], semi_axes[1], x[0] - center[0], x[1] - center[1]);
                let u = (x[0] - center[0]) / semi_axes[0];
                let v = (x[1] - center[1]) / semi_axes[1];
                if u * u + v * v < 1.0 {
                    -dist
                } else {
                    dist
                }
            }
            Shape::Annulus { center, r_in, r_out } => {
                let q = dist2(x, center).sqrt();
                (q - r_out).max(r_in - q)
            }
            Shape::HalfSpace { point, normal } => {
                let n = norm(normal);
                x.iter().zip(point).zip(normal).map(|((a, b), c)| (a - b) * c).sum::<f64>() / n
            }
            Shape::Union { parts } => parts.iter().map(|p| p.sdf(x)).fold(f64::INFINITY, f64::min),
            Shape::Difference { a, b } => a.sdf(x).max(-b.sdf(x)),
            Shape::Translate { shape, offset } => {
                let y: Vec<f64> = x.iter().zip(offset).map(|(a, b)| a - b).collect();
                shape.sdf(&y)
            }
        }
    }

    /// Unit gradient of the signed distance by central differences.
    pub fn sdf_gradient(&self, x: &[f64], step: f64) -> Vec<f64> {
        let mut y = x.to_vec();
        let mut g = vec![0.0; x.len()];
        for i in 0..x.len() {
            y[i] = x[i] + step;
            let a = self.sdf(&y);
            y[i] = x[i] - step;
            let b = self.sdf(&y);
            y[i] = x[i];
            g[i] = (a - b) / (2.0 * step);
        }
        let n = norm(&g);
        if n > 0.0 {
            g.iter_mut().for_each(|v| *v /= n);
        }
        g
    }

    /// Axis-aligned bounding box; `None` for unbounded shapes.
    pub fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            Shape::Ball { center, radius } | Shape::Annulus { center, r_out: radius, .. } => {
                Some((center.iter().map(|c| c - radius).collect(), center.iter().map(|c| c + radius).collect()))
            }
            Shape::Rectangle { min, max } => Some((min.clone(), max.clone())),
            Shape::Ellipse { center, semi_axes } => Some((
                vec![center[0] - semi_axes[0], center[1] - semi_axes[1]],
                vec![center[0] + semi_axes[0], center[1] + semi_axes[1]],
            )),
            Shape::HalfSpace { .. } => None,
            Shape::Union { parts } => {
                let mut acc: Option<(Vec<f64>, Vec<f64>)> = None;
                for p in parts {
                    let (lo, hi) = p.bounds()?;
                    acc = Some(match acc {
                        None => (lo, hi),
                        Some((a, b)) => (
                            a.iter().zip(&lo).map(|(u, v)| u.min(*v)).collect(),
                            b.iter().zip(&hi).map(|(u, v)| u.max(*v)).collect(),
                        ),
                    });
                }
                acc
            }
            Shape::Difference { a, .. } => a.bounds(),
            Shape::Translate { shape, offset } => {
                let (lo, hi) = shape.bounds()?;
                Some((lo.iter().zip(offset).map(|(a, b)| a + b).collect(), hi.iter().zip(offset).map(|(a, b)| a + b).collect()))
            }
        }
    }

    /// Outward unit normal at a boundary point.
    pub fn normal_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.on_boundary(x)?;
        match self {
            Shape::Ball { center, .. } => Ok(unit(&sub(x, center))),
            Shape::Ellipse { center, semi_axes } => {
                let a = semi_axes[0];
                let b = semi_axes[1];
                Ok(unit(&[(x[0] - center[0]) / (a * a), (x[1] - center[1]) / (b * b)]))
            }
            Shape::Annulus { center, r_in, r_out } => {
                let v = sub(x, center);
                let q = norm(&v);
                let u = unit(&v);
                if (q - r_out).abs() <= (q - r_in).abs() {
                    Ok(u)
                } else {
                    Ok(u.iter().map(|c| -c).collect())
                }
            }
            Shape::Rectangle { min, max } => {
                let face = rectangle_face(min, max, x)?;
                let mut n = vec![0.0; x.len()];
                n[face.0] = face.1;
                Ok(n)
            }
            Shape::HalfSpace { normal, .. } => Ok(unit(normal)),
            Shape::Translate { shape, offset } => shape.normal_at(&sub(x, offset)),
            _ => unsupported("normals of composite shapes"),
        }
    }

    fn on_boundary(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return domain("point dimension does not match the shape");
        }
        let scale = self.bounds().map(|(lo, hi)| norm(&sub(&hi, &lo))).unwrap_or(1.0).max(1.0);
        if self.sdf(x).abs() > 1e-9 * scale {
            return domain("point is not on the boundary");
        }
        Ok(())
    }
}

fn rectangle_face(min: &[f64], max: &[f64], x: &[f64]) -> Result<(usize, f64)> {
    let scale = min.iter().zip(max).map(|(a, b)| b - a).fold(0.0, f64::max);
    let tol = 1e-9 * scale.max(1.0);
    let mut hits = Vec::new();
    for i in 0..x.len() {
        if (x[i] - max[i]).abs() <= tol {
            hits.push((i, 1.0));
        } else if (x[i] - min[i]).abs() <= tol {
            hits.push((i, -1.0));
        }
    }
    match hits.len() {
        1 => Ok(hits[0]),
        0 => domain("point is not on the rectangle boundary"),
        _ => domain("rectangle boundary is not smooth at a corner or edge"),
    }
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    v.iter().map(|c| c / n).collect()
}

/// Distance from `(y0, y1)` to the ellipse with semi-axes `(a, b)` and the
/// closest point on it.
pub fn ellipse_closest(a: f64, b: f64, y0: f64, y1: f64) -> (f64, [f64; 2]) {
    // reduce to the first quadrant with the major axis first
    let swap = a < b;
    let (e0, e1, p0, p1) = if swap { (b, a, y1, y0) } else { (a, b, y0, y1) };
    let (s0, s1) = (p0.signum(), p1.signum());
    let (z0, z1) = (p0.abs(), p1.abs());
    let (x0, x1) = closest_first_quadrant(e0, e1, z0, z1);
    let (x0, x1) = (x0 * if s0 == 0.0 { 1.0 } else { s0 }, x1 * if s1 == 0.0 { 1.0 } else { s1 });
    let dist = ((x0 - p0).powi(2) + (x1 - p1).powi(2)).sqrt();
    let pt = if swap { [x1, x0] } else { [x0, x1] };
    (dist, pt)
}

fn closest_first_quadrant(e0: f64, e1: f64, y0: f64, y1: f64) -> (f64, f64) {
    if y1 > 0.0 {
        if y0 > 0.0 {
            let z0 = y0 / e0;
            let z1 = y1 / e1;
            let g = z0 * z0 + z1 * z1 - 1.0;
            if g != 0.0 {
                let r0 = (e0 / e1) * (e0 / e1);
                let sbar = ellipse_root(r0, z0, z1, g);
                (r0 * y0 / (sbar + r0), y1 / (sbar + 1.0))
            } else {
                (y0, y1)
            }
        } else {
            (0.0, e1)
        }
    } else {
        let numer = e0 * y0;
        let denom = e0 * e0 - e1 * e1;
        if numer < denom {
            let q = numer / denom;
            (e0 * q, e1 * (1.0 - q * q).max(0.0).sqrt())
        } else {
            (e0, 0.0)
        }
    }
}

fn ellipse_root(r0: f64, z0: f64, z1: f64, g: f64) -> f64 {
    let n0 = r0 * z0;
    let mut s0 = z1 - 1.0;
    let mut s1 = if g < 0.0 { 0.0 } else { n0.hypot(z1) - 1.0 };
    let mut s = 0.0;
    for _ in 0..1100 {
        s = 0.5 * (s0 + s1);
        if s == s0 || s == s1 {
            break;
        }
        let a = n0 / (s + r0);
        let b = z1 / (s + 1.0);
        let gv = a * a + b * b - 1.0;
        if gv > 0.0 {
            s0 = s;
        } else if gv < 0.0 {
            s1 = s;
        } else {
            break;
        }
    }
    s
}

/// Occupancy fractions with `supersample^d` stratified samples per boundary cell.
pub fn rasterize(shape: &Shape, grid: &GridSpec, supersample: usize) -> Result<GridSet> {
    if supersample == 0 {
        return invalid("supersample must be >= 1");
    }
    rasterize_with(shape, grid, Coverage::Stratified { n: supersample })
}

pub fn rasterize_with(shape: &Shape, grid: &GridSpec, coverage: Coverage) -> Result<GridSet> {
    shape.validate()?;
    let d = grid.dim();
    if shape.dim() != d {
        return invalid("shape and grid dimensions differ");
    }
    check_inside(shape, grid)?;
    let h = grid.h;
    let row = grid.dims[d - 1];
    let mut frac = vec![0.0; grid.len()];
    frac.par_chunks_mut(row).enumerate().for_each(|(ri, chunk)| {
        let mut c = vec![0.0; d];
        let mut idx = grid.unflatten(ri * row);
        for (k, f) in chunk.iter_mut().enumerate() {
            idx[d - 1] = k;
            grid.center_into(&idx, &mut c);
            *f = cell_fraction(shape, &c, h, coverage);
        }
    });
    Ok(GridSet::new(grid.clone(), frac)?)
}

fn check_inside(shape: &Shape, grid: &GridSpec) -> Result<()> {
    if let Some((lo, hi)) = shape.bounds() {
        let (glo, ghi) = grid.extent();
        for i in 0..grid.dim() {
            if lo[i] < glo[i] {
                return Err(Error::OutsideGrid { side: format!("x{}-min", i + 1) });
            }
            if hi[i] > ghi[i] {
                return Err(Error::OutsideGrid { side: format!("x{}-max", i + 1) });
            }
        }
    }
    Ok(())
}

/// Fraction of the cube of side `h` centred at `c` occupied by the shape.
pub fn cell_fraction(shape: &Shape, c: &[f64], h: f64, coverage: Coverage) -> f64 {
    let d = c.len();
    let hd = 0.5 * h * (d as f64).sqrt();
    let s = shape.sdf(c);
    if s > hd {
        return 0.0;
    }
    if s < -hd {
        return 1.0;
    }
    match coverage {
        Coverage::Stratified { n } => {
            let total = n.pow(d as u32);
            let mut cnt = 0usize;
            let mut y = vec![0.0; d];
            for m in 0..total {
                let mut q = m;
                for i in (0..d).rev() {
                    let k = q % n;
                    q /= n;
                    y[i] = c[i] - 0.5 * h + (k as f64 + 0.5) * h / n as f64;
                }
                if shape.contains(&y) {
                    cnt += 1;
                }
            }
            cnt as f64 / total as f64
        }
        Coverage::Adaptive { depth } => adaptive_fraction(shape, c, h, depth, s),
    }
}

fn adaptive_fraction(shape: &Shape, c: &[f64], h: f64, depth: usize, sdf_c: f64) -> f64 {
    let d = c.len();
    let hd = 0.5 * h * (d as f64).sqrt();
    if sdf_c > hd {
        return 0.0;
    }
    if sdf_c < -hd {
        return 1.0;
    }
    if depth == 0 {
        let g = shape.sdf_gradient(c, 1e-3 * h);
        let a: Vec<f64> = g.iter().map(|v| v * h).collect();
        return cube_halfspace_fraction(&a, -sdf_c);
    }
    let n = 1usize << d;
    let mut acc = 0.0;
    let mut y = vec![0.0; d];
    for m in 0..n {
        for i in 0..d {
            let bit = (m >> (d - 1 - i)) & 1;
            y[i] = c[i] + if bit == 1 { 0.25 * h } else { -0.25 * h };
        }
        let s = shape.sdf(&y);
        acc += adaptive_fraction(shape, &y, 0.5 * h, depth - 1, s);
    }
    acc / n as f64
}

/// Exact d-volume.
pub fn exact_area(shape: &Shape) -> Result<f64> {
    shape.validate()?;
    match shape {
        Shape::Ball { center, radius } => Ok(omega(center.len()) * radius.powi(center.len() as i32)),
        Shape::Rectangle { min, max } => Ok(min.iter().zip(max).map(|(a, b)| b - a).product()),
        Shape::Ellipse { semi_axes, .. } => Ok(PI * semi_axes[0] * semi_axes[1]),
        Shape::Annulus { center, r_in, r_out } => {
            let d = center.len() as i32;
            Ok(omega(center.len()) * (r_out.powi(d) - r_in.powi(d)))
        }
        Shape::Translate { shape, .. } => exact_area(shape),
        _ => unsupported("exact area of this shape"),
    }
}

/// Exact (d-1)-measure of the boundary.
pub fn exact_perimeter(shape: &Shape) -> Result<f64> {
    shape.validate()?;
    match shape {
        Shape::Ball { center, radius } => {
            let d = center.len();
            Ok(d as f64 * omega(d) * radius.powi(d as i32 - 1))
        }
        Shape::Rectangle { min, max } => {
            let w: Vec<f64> = min.iter().zip(max).map(|(a, b)| b - a).collect();
            let vol: f64 = w.iter().product();
            Ok(w.iter().map(|wi| 2.0 * vol / wi).sum())
        }
        Shape::Ellipse { semi_axes, .. } => {
            let (a, b) = (semi_axes[0], semi_axes[1]);
            let f = |t: f64| (a * a * t.sin().powi(2) + b * b * t.cos().powi(2)).sqrt();
            Ok(4.0 * integrate_pieces(f, &[0.0, 0.25 * PI, 0.5 * PI], 1e-14))
        }
        Shape::Annulus { center, r_in, r_out } => {
            let d = center.len();
            Ok(d as f64 * omega(d) * (r_out.powi(d as i32 - 1) + r_in.powi(d as i32 - 1)))
        }
        Shape::Translate { shape, .. } => exact_perimeter(shape),
        _ => unsupported("exact perimeter of this shape"),
    }
}

/// `∫_{∂E} φ(ν) dH^1` for planar shapes with parametrized boundaries.
pub fn exact_aniso_perimeter(shape: &Shape, g: &Anisotropy) -> Result<f64> {
    shape.validate()?;
    if shape.dim() != 2 {
        return unsupported("anisotropic perimeter is planar only");
    }
    let phi = |a: f64| phi_density(g, &[a.cos(), a.sin()], DEFAULT_PHI_ORDER).unwrap_or(f64::NAN);
    let quarters: Vec<f64> = (0..=8).map(|i| 0.25 * PI * i as f64).collect();
    let v = match shape {
        Shape::Ball { radius, .. } => radius * integrate_pieces(phi, &quarters, 1e-11),
        Shape::Annulus { r_in, r_out, .. } => (r_in + r_out) * integrate_pieces(phi, &quarters, 1e-11),
        Shape::Ellipse { semi_axes, .. } => {
            let (a, b) = (semi_axes[0], semi_axes[1]);
            let f = |t: f64| {
                let (s, c) = t.sin_cos();
                let speed = (a * a * s * s + b * b * c * c).sqrt();
                let n = [b * c, a * s];
                let ang = n[1].atan2(n[0]);
                phi(ang) * speed
            };
            integrate_pieces(f, &quarters, 1e-11)
        }
        Shape::Rectangle { min, max } => {
            let w = max[0] - min[0];
            let hgt = max[1] - min[1];
            hgt * (phi(0.0) + phi(PI)) + w * (phi(0.5 * PI) + phi(1.5 * PI))
        }
        Shape::Translate { shape, .. } => return exact_aniso_perimeter(shape, g),
        _ => return unsupported("anisotropic perimeter of this shape"),
    };
    if v.is_nan() {
        return domain("anisotropy is not evaluable in two dimensions");
    }
    Ok(v)
}

/// `n` boundary points with exact outward normals.
pub fn boundary_samples(shape: &Shape, n: usize) -> Result<Vec<BoundarySample>> {
    shape.validate()?;
    let d = shape.dim();
    let mut out = Vec::with_capacity(n);
    match shape {
        Shape::Ball { center, radius } if d == 2 => {
            for k in 0..n {
                let t = 2.0 * PI * k as f64 / n as f64;
                let nv = [t.cos(), t.sin()];
                out.push(BoundarySample { point: vec![center[0] + radius * nv[0], center[1] + radius * nv[1]], normal: nv.to_vec() });
            }
        }
        Shape::Ball { center, radius } if d == 3 => {
            let golden = PI * (3.0 - 5f64.sqrt());
            for k in 0..n {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                let rho = (1.0 - z * z).sqrt();
                let t = golden * k as f64;
                let nv = [rho * t.cos(), rho * t.sin(), z];
                out.push(BoundarySample { point: (0..3).map(|i| center[i] + radius * nv[i]).collect(), normal: nv.to_vec() });
            }
        }
        Shape::Ellipse { center, semi_axes } => {
            let (a, b) = (semi_axes[0], semi_axes[1]);
            for k in 0..n {
                let t = 2.0 * PI * k as f64 / n as f64;
                let (s, c) = t.sin_cos();
                out.push(BoundarySample { point: vec![center[0] + a * c, center[1] + b * s], normal: unit(&[b * c, a * s]) });
            }
        }
        Shape::Annulus { center, r_in, r_out } if d == 2 => {
            let n_out = (n as f64 * r_out / (r_in + r_out)).round().max(1.0) as usize;
            let n_in = n.saturating_sub(n_out);
            for k in 0..n_out {
                let t = 2.0 * PI * k as f64 / n_out as f64;
                let nv = [t.cos(), t.sin()];
                out.push(BoundarySample { point: vec![center[0] + r_out * nv[0], center[1] + r_out * nv[1]], normal: nv.to_vec() });
            }
            for k in 0..n_in {
                let t = 2.0 * PI * k as f64 / n_in as f64;
                let nv = [t.cos(), t.sin()];
                out.push(BoundarySample { point: vec![center[0] + r_in * nv[0], center[1] + r_in * nv[1]], normal: vec![-nv[0], -nv[1]] });
            }
        }
        Shape::Rectangle { min, max } if d == 2 => {
            let w = max[0] - min[0];
            let hgt = max[1] - min[1];
            let per = 2.0 * (w + hgt);
            let sides = [
                ([min[0], min[1]], [1.0, 0.0], w, [0.0, -1.0]),
                ([max[0], min[1]], [0.0, 1.0], hgt, [1.0, 0.0]),
                ([max[0], max[1]], [-1.0, 0.0], w, [0.0, 1.0]),
                ([min[0], max[1]], [0.0, -1.0], hgt, [-1.0, 0.0]),
            ];
            for k in 0..n {
                let mut s = per * (k as f64 + 0.5) / n as f64;
                for (start, dir, len, nv) in sides {
                    if s < len {
                        out.push(BoundarySample { point: vec![start[0] + s * dir[0], start[1] + s * dir[1]], normal: nv.to_vec() });
                        break;
                    }
                    s -= len;
                }
            }
        }
        Shape::HalfSpace { point, normal } if d == 2 => {
            let nv = unit(normal);
            let tau = [-nv[1], nv[0]];
            for k in 0..n {
                let t = k as f64 - 0.5 * (n as f64 - 1.0);
                out.push(BoundarySample { point: vec![point[0] + t * tau[0], point[1] + t * tau[1]], normal: nv.clone() });
            }
        }
        Shape::Translate { shape, offset } => {
            for mut b in boundary_samples(shape, n)? {
                b.point.iter_mut().zip(offset).for_each(|(p, o)| *p += o);
                out.push(b);
            }
        }
        _ => return unsupported("boundary sampling of this shape"),
    }
    Ok(out)
}

/// Sum of principal curvatures, positive on balls.
pub fn classical_mean_curvature(shape: &Shape, x: &[f64]) -> Result<f64> {
    shape.validate()?;
    shape.on_boundary(x)?;
    let d = shape.dim() as f64;
    match shape {
        Shape::Ball { radius, .. } => Ok((d - 1.0) / radius),
        Shape::Ellipse { center, semi_axes } => {
            let (a, b) = (semi_axes[0], semi_axes[1]);
            let t = ((x[1] - center[1]) / b).atan2((x[0] - center[0]) / a);
            let (s, c) = t.sin_cos();
            Ok(a * b / (a * a * s * s + b * b * c * c).powf(1.5))
        }
        Shape::Annulus { center, r_in, r_out } => {
            let q = dist2(x, center).sqrt();
            if (q - r_out).abs() <= (q - r_in).abs() {
                Ok((d - 1.0) / r_out)
            } else {
                Ok(-(d - 1.0) / r_in)
            }
        }
        Shape::Rectangle { min, max } => {
            rectangle_face(min, max, x)?;
            Ok(0.0)
        }
        Shape::HalfSpace { .. } => Ok(0.0),
        Shape::Translate { shape, offset } => classical_mean_curvature(shape, &sub(x, offset)),
        _ => unsupported("curvature of composite shapes"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc_grid(h: f64, half: f64) -> GridSpec {
        let n = (2.0 * half / h).round() as usize;
        GridSpec::new(vec![-half, -half], h, vec![n, n]).unwrap()
    }

    #[test]
    fn ball_area_rasterized() {
        let g = disc_grid(0.01, 1.2);
        let e = rasterize(&Shape::ball(&[0.0, 0.0], 1.0), &g, 4).unwrap();
        assert!((e.measure() - PI).abs() < 2e-4, "{}", e.measure() - PI);
        let e = rasterize_with(&Shape::ball(&[0.0, 0.0], 1.0), &g, Coverage::Adaptive { depth: 4 }).unwrap();
        assert!((e.measure() - PI).abs() < 1e-6, "{}", e.measure() - PI);
    }

    #[test]
    fn aligned_rectangle_is_exact() {
        let g = disc_grid(0.125, 1.0);
        let e = rasterize(&Shape::rectangle(&[-0.5, -0.25], &[0.5, 0.75]), &g, 4).unwrap();
        assert!(e.frac.iter().all(|f| *f == 0.0 || *f == 1.0));
        assert_eq!(e.measure(), 1.0);
    }

    #[test]
    fn disjoint_union_is_additive() {
        let g = disc_grid(0.01, 2.0);
        let a = Shape::ball(&[-1.0, 0.0], 0.5);
        let b = Shape::ball(&[1.0, 0.3], 0.4);
        let u = Shape::Union { parts: vec![a.clone(), b.clone()] };
        let mu = rasterize(&u, &g, 4).unwrap().measure();
        let ma = rasterize(&a, &g, 4).unwrap().measure();
        let mb = rasterize(&b, &g, 4).unwrap().measure();
        assert!((mu - ma - mb).abs() < 1e-12);
        assert!((mu - exact_area(&a).unwrap() - exact_area(&b).unwrap()).abs() < 4e-4);
    }

    #[test]
    fn outside_grid_names_side() {
        let g = disc_grid(0.1, 1.0);
        let err = rasterize(&Shape::ball(&[0.5, 0.0], 0.7), &g, 2).unwrap_err();
        assert!(err.to_string().contains("x1-max"), "{err}");
    }

    #[test]
    fn translation_shifts_cells() {
        let h = 1.0 / 32.0;
        let g = GridSpec::new(vec![-1.0, -1.0], h, vec![64, 64]).unwrap();
        let s = Shape::ellipse(&[-0.2, 0.1], 0.5, 0.3);
        let a = rasterize(&s, &g, 4).unwrap();
        let b = rasterize(&s.clone().translate(&[3.0 * h, -2.0 * h]), &g, 4).unwrap();
        for i in 0..64 {
            for j in 0..64 {
                if i + 3 < 64 && j >= 2 {
                    assert_eq!(b.frac[(i + 3) * 64 + (j - 2)], a.frac[i * 64 + j]);
                }
            }
        }
    }

    #[test]
    fn exact_measures() {
        let b = Shape::ball(&[0.0, 0.0], 1.0);
        assert!((exact_area(&b).unwrap() - PI).abs() < 1e-15);
        assert!((exact_perimeter(&b).unwrap() - 2.0 * PI).abs() < 1e-15);
        let an = Shape::annulus(&[0.0, 0.0], 0.5, 1.0);
        assert!((exact_perimeter(&an).unwrap() - 3.0 * PI).abs() < 1e-14);
        assert!(exact_perimeter(&Shape::Union { parts: vec![b.clone()] }).is_err());
        let b3 = Shape::ball(&[0.0, 0.0, 0.0], 2.0);
        assert!((exact_perimeter(&b3).unwrap() - 16.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn ellipse_perimeter_vs_polyline() {
        let e = Shape::ellipse(&[0.0, 0.0], 2.0, 1.0);
        let p = exact_perimeter(&e).unwrap();
        // Richardson-extrapolated inscribed polygons
        let poly = |n: usize| {
            (0..n)
                .map(|k| {
                    let t0 = 2.0 * PI * k as f64 / n as f64;
                    let t1 = 2.0 * PI * (k + 1) as f64 / n as f64;
                    ((2.0 * t1.cos() - 2.0 * t0.cos()).powi(2) + (t1.sin() - t0.sin()).powi(2)).sqrt()
                })
                .sum::<f64>()
        };
        let (p1, p2) = (poly(20000), poly(40000));
        let extrap = (4.0 * p2 - p1) / 3.0;
        assert!((p - extrap).abs() < 1e-8, "{} {}", p, extrap);
    }

    #[test]
    fn aniso_perimeters() {
        let b = Shape::ball(&[0.0, 0.0], 1.0);
        assert!((exact_aniso_perimeter(&b, &Anisotropy::Isotropic).unwrap() - 4.0 * PI).abs() < 1e-9);
        let g0 = Anisotropy::dislocation(8.0 * PI, 0.0).unwrap();
        assert!((exact_aniso_perimeter(&b, &g0).unwrap() - 4.0 * PI).abs() < 1e-9);
        let r = Shape::rectangle(&[0.0, 0.0], &[2.0, 1.0]);
        assert!((exact_aniso_perimeter(&r, &Anisotropy::Isotropic).unwrap() - 12.0).abs() < 1e-9);
    }

    #[test]
    fn samples_and_normals() {
        let b = Shape::ball(&[0.0, 0.0], 1.0);
        let s = boundary_samples(&b, 4).unwrap();
        let expect = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for (bs, e) in s.iter().zip(expect) {
            assert!((bs.point[0] - e[0]).abs() < 1e-15 && (bs.point[1] - e[1]).abs() < 1e-15);
            assert!((bs.normal[0] - e[0]).abs() < 1e-15 && (bs.normal[1] - e[1]).abs() < 1e-15);
        }
        let hs = Shape::half_space(&[0.0, 0.0], &[0.0, 1.0]);
        assert!(boundary_samples(&hs, 5).unwrap().iter().all(|b| b.normal == vec![0.0, 1.0]));
        let el = Shape::ellipse(&[0.0, 0.0], 2.0, 1.0);
        assert_eq!(boundary_samples(&el, 8).unwrap()[0].normal, vec![1.0, 0.0]);
        for shape in [b, el, Shape::annulus(&[0.1, 0.0], 0.4, 0.9), Shape::rectangle(&[0.0, 0.0], &[1.0, 2.0]), Shape::ball(&[0.0, 0.0, 0.0], 1.0)] {
            for bs in boundary_samples(&shape, 40).unwrap() {
                assert!((norm(&bs.normal) - 1.0).abs() < 1e-12);
                let eps = 1e-6;
                let out: Vec<f64> = bs.point.iter().zip(&bs.normal).map(|(p, n)| p + eps * n).collect();
                let inn: Vec<f64> = bs.point.iter().zip(&bs.normal).map(|(p, n)| p - eps * n).collect();
                assert!(!shape.contains(&out) && shape.contains(&inn));
                let n2 = shape.normal_at(&bs.point).unwrap();
                assert!(n2.iter().zip(&bs.normal).all(|(a, b)| (a - b).abs() < 1e-9));
            }
        }
    }

    #[test]
    fn mean_curvatures() {
        let b = Shape::ball(&[0.0, 0.0], 2.0);
        assert!((classical_mean_curvature(&b, &[2.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        let b3 = Shape::ball(&[0.0, 0.0, 0.0], 2.0);
        assert!((classical_mean_curvature(&b3, &[0.0, 0.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        let el = Shape::ellipse(&[0.0, 0.0], 2.0, 1.0);
        assert!((classical_mean_curvature(&el, &[2.0, 0.0]).unwrap() - 2.0).abs() < 1e-14);
        let r = Shape::rectangle(&[0.0, 0.0], &[1.0, 1.0]);
        assert!(classical_mean_curvature(&r, &[1.0, 1.0]).is_err());
        assert_eq!(classical_mean_curvature(&r, &[1.0, 0.5]).unwrap(), 0.0);
        assert!(classical_mean_curvature(&b, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn ellipse_curvature_vs_graph_differences() {
        // y = b sqrt(1 - x^2/a^2) near the top, curvature from finite differences
        let (a, b) = (2.0f64, 1.0f64);
        let el = Shape::ellipse(&[0.0, 0.0], a, b);
        let x0 = 0.7;
        let y = |x: f64| b * (1.0 - x * x / (a * a)).sqrt();
        let e = 1e-4;
        let y1 = (y(x0 + e) - y(x0 - e)) / (2.0 * e);
        let y2 = (y(x0 + e) - 2.0 * y(x0) + y(x0 - e)) / (e * e);
        let k = -y2 / (1.0 + y1 * y1).powf(1.5);
        assert!((classical_mean_curvature(&el, &[x0, y(x0)]).unwrap() - k).abs() < 1e-6);
    }

    #[test]
    fn ellipse_distance_is_exact() {
        let (a, b) = (2.0, 1.0);
        for &(x, y) in &[(3.0, 0.5), (0.3, 0.2), (-1.0, 2.0), (0.0, 0.0), (2.5, 0.0), (0.0, -1.7)] {
            let (dist, p) = ellipse_closest(a, b, x, y);
            // brute-force over the parametrization
            let mut best = f64::INFINITY;
            for k in 0..200000 {
                let t = 2.0 * PI * k as f64 / 200000.0;
                best = best.min(((a * t.cos() - x).powi(2) + (b * t.sin() - y).powi(2)).sqrt());
            }
            assert!((dist - best).abs() < 1e-6, "{x} {y}: {dist} vs {best}");
            assert!(((p[0] / a).powi(2) + (p[1] / b).powi(2) - 1.0).abs() < 1e-12);
        }
    }
}
