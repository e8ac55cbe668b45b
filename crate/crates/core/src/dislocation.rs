//! Dislocation-line anisotropy: the elastic density, its surface density in
//! closed form, the induced curvature and the preset flow experiment.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::classical_aniso_curvature;
use crate::error::{domain, invalid, Result};
use crate::flow::{default_band, mcf_reference, point_segment, run_flow, FlowConfig, Polyline, Scaling, Trajectory};
use crate::grid::GridSpec;
use crate::kernels::{Anisotropy, KernelParams};
use crate::perimeter::HRule;
use crate::shapes::{boundary_samples, exact_perimeter, Shape};

/// Shear modulus and Poisson ratio; the Burgers vector is `e1` rotated by
/// `burgers_angle`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DislocationParams {
    pub mu: f64,
    pub poisson: f64,
    #[serde(default)]
    pub burgers_angle: f64,
}

impl DislocationParams {
    pub fn new(mu: f64, poisson: f64) -> Result<Self> {
        let dp = DislocationParams { mu, poisson, burgers_angle: 0.0 };
        dp.validate()?;
        Ok(dp)
    }

    pub fn rotated(self, burgers_angle: f64) -> Self {
        DislocationParams { burgers_angle, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return domain(format!("mu must be > 0, got {}", self.mu));
        }
        if !(self.poisson > -1.0 && self.poisson < 0.5) {
            return domain(format!("poisson must lie in (-1, 1/2), got {}", self.poisson));
        }
        if !self.burgers_angle.is_finite() {
            return domain("burgers_angle must be finite");
        }
        Ok(())
    }

    /// Coefficients `((1+ν)/(1-ν), (1-2ν)/(1-ν))`.
    pub fn coefficients(&self) -> (f64, f64) {
        let nu = self.poisson;
        ((1.0 + nu) / (1.0 - nu), (1.0 - 2.0 * nu) / (1.0 - nu))
    }

    fn frame(&self, v: &[f64]) -> (f64, f64) {
        if self.burgers_angle == 0.0 {
            (v[0], v[1])
        } else {
            let (s, c) = self.burgers_angle.sin_cos();
            (c * v[0] + s * v[1], -s * v[0] + c * v[1])
        }
    }

    /// Density evaluated as a degree-zero homogeneous form.
    #[inline]
    pub fn g(&self, xi: &[f64]) -> f64 {
        let (a, b) = self.coefficients();
        let (x, y) = self.frame(xi);
        let x2 = x * x;
        let y2 = y * y;
        self.mu / (8.0 * PI) * ((a * x2 + b * y2) / (x2 + y2))
    }
}

pub fn dislocation_g(dp: &DislocationParams, xi: &[f64]) -> Result<f64> {
    dp.validate()?;
    unit2(xi)?;
    Ok(dp.g(xi))
}

/// Closed form of the surface density.
pub fn dislocation_phi_closed(dp: &DislocationParams, nu: &[f64]) -> Result<f64> {
    dp.validate()?;
    unit2(nu)?;
    let (a, b) = dp.coefficients();
    let (n1, n2) = dp.frame(nu);
    Ok(dp.mu / (12.0 * PI) * (a * (1.0 + n1 * n1) + b * (1.0 + n2 * n2)))
}

fn unit2(v: &[f64]) -> Result<()> {
    if v.len() != 2 {
        return domain(format!("expected a planar vector, got length {}", v.len()));
    }
    if ((v[0] * v[0] + v[1] * v[1]).sqrt() - 1.0).abs() > 1e-12 {
        return domain("expected a unit vector");
    }
    Ok(())
}

/// `K^{g,1}(x, E) = 2 g(τ) κ` for the dislocation density.
pub fn dislocation_k1(dp: &DislocationParams, shape: &Shape, x: &[f64]) -> Result<f64> {
    dp.validate()?;
    classical_aniso_curvature(&Anisotropy::Dislocation(*dp), shape, x)
}

/// Closed polyline moved with normal speed `2 g(τ) κ` (inward on convex
/// arcs), explicit Euler in time and spline resampling after every step.
#[derive(Debug, Clone)]
pub struct FrontTracker {
    pub points: Vec<[f64; 2]>,
    pub g: Anisotropy,
    pub spacing: f64,
    pub t: f64,
}

impl FrontTracker {
    /// `points` must describe a counter-clockwise closed curve.
    pub fn new(points: Vec<[f64; 2]>, g: Anisotropy, spacing: f64) -> Result<Self> {
        g.check_dim(2)?;
        if points.len() < 8 {
            return invalid("front tracking needs at least 8 nodes");
        }
        if !(spacing > 0.0) {
            return invalid("node spacing must be > 0");
        }
        let mut f = FrontTracker { points, g, spacing, t: 0.0 };
        if signed_area(&f.points) < 0.0 {
            f.points.reverse();
        }
        f.resample();
        Ok(f)
    }

    pub fn from_shape(shape: &Shape, g: Anisotropy, spacing: f64) -> Result<Self> {
        let per = exact_perimeter(shape)?;
        let n = ((per / spacing).ceil() as usize).max(16);
        let pts: Vec<[f64; 2]> = boundary_samples(shape, n)?.iter().map(|b| [b.point[0], b.point[1]]).collect();
        FrontTracker::new(pts, g, spacing)
    }

    fn stable_dt(&self) -> f64 {
        let gmax = (0..64)
            .map(|k| {
                let a = PI * k as f64 / 64.0;
                self.g.eval(&[a.cos(), a.sin()])
            })
            .fold(0.0, f64::max);
        0.1 * self.spacing * self.spacing / gmax
    }

    pub fn step(&mut self, dt: f64) {
        let n = self.points.len();
        let p = &self.points;
        let moved: Vec<[f64; 2]> = (0..n)
            .map(|i| {
                let a = p[(i + n - 1) % n];
                let b = p[i];
                let c = p[(i + 1) % n];
                let kappa = circumcircle_curvature(&a, &b, &c);
                let t = [c[0] - a[0], c[1] - a[1]];
                let tl = (t[0] * t[0] + t[1] * t[1]).sqrt();
                let tau = [t[0] / tl, t[1] / tl];
                let inward = [-tau[1], tau[0]];
                let v = 2.0 * self.g.eval(&tau) * kappa;
                [b[0] + dt * v * inward[0], b[1] + dt * v * inward[1]]
            })
            .collect();
        self.points = moved;
        self.t += dt;
        self.resample();
    }

    pub fn run_to(&mut self, t_end: f64) {
        let dt = self.stable_dt();
        while self.t < t_end * (1.0 - 1e-12) && self.points.len() >= 8 {
            self.step(dt.min(t_end - self.t));
        }
    }

    /// Uniform arc-length nodes on the periodic cubic spline through the
    /// current nodes.
    fn resample(&mut self) {
        let p = &self.points;
        let n = p.len();
        let mut s = vec![0.0; n + 1];
        for i in 0..n {
            let a = p[i];
            let b = p[(i + 1) % n];
            s[i + 1] = s[i] + ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        }
        let total = s[n];
        let m = ((total / self.spacing).round() as usize).max(8);
        let xs: Vec<f64> = p.iter().map(|q| q[0]).collect();
        let ys: Vec<f64> = p.iter().map(|q| q[1]).collect();
        let sx = PeriodicSpline::new(&s, &xs);
        let sy = PeriodicSpline::new(&s, &ys);
        self.points = (0..m)
            .map(|k| {
                let t = total * k as f64 / m as f64;
                [sx.eval(t), sy.eval(t)]
            })
            .collect();
    }

    pub fn polyline(&self) -> Polyline {
        Polyline { points: self.points.clone(), closed: true }
    }
}

/// Signed curvature of the circle through three points, positive when they
/// turn counter-clockwise.
pub fn circumcircle_curvature(a: &[f64; 2], b: &[f64; 2], c: &[f64; 2]) -> f64 {
    let ab = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    let bc = ((c[0] - b[0]).powi(2) + (c[1] - b[1]).powi(2)).sqrt();
    let ca = ((a[0] - c[0]).powi(2) + (a[1] - c[1]).powi(2)).sqrt();
    let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
    2.0 * cross / (ab * bc * ca)
}

fn signed_area(p: &[[f64; 2]]) -> f64 {
    let n = p.len();
    0.5 * (0..n).map(|i| p[i][0] * p[(i + 1) % n][1] - p[(i + 1) % n][0] * p[i][1]).sum::<f64>()
}

/// Interpolating cubic spline with period `s[n]` through `(s[i], v[i])`.
struct PeriodicSpline {
    s: Vec<f64>,
    v: Vec<f64>,
    m: Vec<f64>,
}

impl PeriodicSpline {
    fn new(s: &[f64], v: &[f64]) -> Self {
        let n = v.len();
        let h: Vec<f64> = (0..n).map(|i| s[i + 1] - s[i]).collect();
        // cyclic tridiagonal system for the second derivatives
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let hp = h[(i + n - 1) % n];
            let hn = h[i];
            sub[i] = hp / 6.0;
            diag[i] = (hp + hn) / 3.0;
            sup[i] = hn / 6.0;
            rhs[i] = (v[(i + 1) % n] - v[i]) / hn - (v[i] - v[(i + n - 1) % n]) / hp;
        }
        let m = cyclic_tridiagonal(&sub, &diag, &sup, &rhs);
        PeriodicSpline { s: s.to_vec(), v: v.to_vec(), m }
    }

    fn eval(&self, t: f64) -> f64 {
        let n = self.v.len();
        let i = match self.s.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => i.min(n - 1),
            Err(i) => i.saturating_sub(1).min(n - 1),
        };
        let h = self.s[i + 1] - self.s[i];
        let a = (self.s[i + 1] - t) / h;
        let b = (t - self.s[i]) / h;
        let j = (i + 1) % n;
        a * self.v[i] + b * self.v[j] + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[j]) * h * h / 6.0
    }
}

/// Sherman-Morrison reduction of a cyclic tridiagonal system; `sub[0]` and
/// `sup[n-1]` are the corner entries.
fn cyclic_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let alpha = sup[n - 1];
    let beta = sub[0];
    let gamma = -diag[0];
    let mut d = diag.to_vec();
    d[0] -= gamma;
    d[n - 1] -= alpha * beta / gamma;
    let x = thomas(sub, &d, sup, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = thomas(sub, &d, sup, &u);
    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(a, b)| a - fact * b).collect()
}

fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let den = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / den;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / den;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Symmetric Hausdorff distance between two sets of polylines, measured from
/// the vertices of each to the segments of the other.
pub fn hausdorff(a: &[Polyline], b: &[Polyline]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.is_empty() && b.is_empty() { 0.0 } else { f64::INFINITY };
    }
    one_sided(a, b).max(one_sided(b, a))
}

fn one_sided(a: &[Polyline], b: &[Polyline]) -> f64 {
    let segs: Vec<([f64; 2], [f64; 2])> = b.iter().flat_map(|p| p.segments()).collect();
    a.par_iter()
        .flat_map(|p| p.points.par_iter())
        .map(|q| {
            if segs.is_empty() {
                // a single point
                let r = b[0].points[0];
                return ((q[0] - r[0]).powi(2) + (q[1] - r[1]).powi(2)).sqrt();
            }
            segs.iter().map(|(s, t)| point_segment(q, s, t)).fold(f64::INFINITY, f64::min)
        })
        .reduce(|| 0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetRow {
    pub r: f64,
    pub h: f64,
    pub hausdorff: f64,
    /// Mean radius of the flow and of the isotropic reference, when `g` is
    /// constant.
    pub mean_radius: Option<f64>,
    pub reference_radius: Option<f64>,
    pub extinct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetReport {
    pub t_end: f64,
    pub rows: Vec<PresetRow>,
    pub trajectories: Vec<Trajectory>,
    pub oracle: Polyline,
}

impl PresetReport {
    /// Hausdorff distances decrease over the last three radii.
    pub fn decreasing_in_r(&self) -> bool {
        let n = self.rows.len();
        let tail = &self.rows[n.saturating_sub(3)..];
        tail.windows(2).all(|w| w[1].hausdorff < w[0].hausdorff)
    }
}

/// σ-rescaled `s = 1` flows for each core radius compared with the
/// front-tracking solution at `t_end`.
pub fn dislocation_flow_preset(dp: &DislocationParams, shape: &Shape, r_list: &[f64], grid_rule: HRule, t_end: f64) -> Result<PresetReport> {
    dp.validate()?;
    if shape.dim() != 2 {
        return invalid("the dislocation preset runs in the plane");
    }
    let Some((lo, hi)) = shape.bounds() else {
        return invalid("the dislocation preset needs a bounded shape");
    };
    let g = Anisotropy::Dislocation(*dp);
    let h_min = r_list.iter().map(|r| grid_rule.h(*r)).fold(f64::INFINITY, f64::min);
    let mut tracker = FrontTracker::from_shape(shape, g.clone(), (0.5 * h_min).min(0.01))?;
    tracker.run_to(t_end);
    let oracle = tracker.polyline();
    let runs: Vec<(PresetRow, Trajectory)> = r_list
        .par_iter()
        .map(|&r| {
            let h = grid_rule.check(r)?;
            let p = KernelParams::new(2, 1.0, r)?;
            let band = default_band(r, h);
            let glo: Vec<f64> = lo.iter().map(|v| v - band).collect();
            let ghi: Vec<f64> = hi.iter().map(|v| v + band).collect();
            let grid = GridSpec::covering(&glo, &ghi, h, 3)?;
            let mut cfg = FlowConfig::new(p, t_end, t_end / 5.0);
            cfg.g = g.clone();
            cfg.scaling = Scaling::Sigma;
            let traj = run_flow(shape, &grid, &cfg)?;
            let last = traj.contours.last().cloned().unwrap_or_default();
            let reached = traj.extinction_time.is_none();
            let reference = match (g.constant_value(), shape) {
                (Some(_), Shape::Ball { radius, .. }) => Some(mcf_reference(*radius, 2, t_end, &g)?.0),
                _ => None,
            };
            let row = PresetRow {
                r,
                h,
                hausdorff: if reached { hausdorff(&last, &[oracle.clone()]) } else { f64::INFINITY },
                mean_radius: traj.radius_stats.last().copied().flatten().map(|s| s.mean),
                reference_radius: reference,
                extinct: !reached,
            };
            Ok((row, traj))
        })
        .collect::<Result<_>>()?;
    let (rows, trajectories) = runs.into_iter().unzip();
    Ok(PresetReport { t_end, rows, trajectories, oracle })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_values() {
        let dp = DislocationParams::new(8.0 * PI, 0.0).unwrap();
        for k in 0..12 {
            let a = 0.3 * k as f64;
            assert_eq!(dislocation_g(&dp, &[a.cos(), a.sin()]).unwrap(), 1.0);
        }
        let dp = DislocationParams::new(8.0 * PI, 0.25).unwrap();
        assert!((dislocation_g(&dp, &[1.0, 0.0]).unwrap() - 5.0 / 3.0).abs() < 1e-14);
        assert!((dislocation_g(&dp, &[0.0, 1.0]).unwrap() - 2.0 / 3.0).abs() < 1e-14);
        let x = [0.6, -0.8];
        assert_eq!(dp.g(&x), dp.g(&[-0.6, 0.8]));
    }

    #[test]
    fn params_checked() {
        assert!(DislocationParams::new(1.0, 0.5).is_err());
        assert!(DislocationParams::new(1.0, -1.0).is_err());
        assert!(DislocationParams::new(0.0, 0.1).is_err());
        assert!(dislocation_g(&DislocationParams::new(1.0, 0.1).unwrap(), &[1.0, 1.0]).is_err());
    }

    #[test]
    fn phi_closed_values() {
        let dp = DislocationParams::new(8.0 * PI, 0.0).unwrap();
        assert!((dislocation_phi_closed(&dp, &[0.6, 0.8]).unwrap() - 2.0).abs() < 1e-14);
        let dp = DislocationParams::new(8.0 * PI, 0.25).unwrap();
        assert!((dislocation_phi_closed(&dp, &[1.0, 0.0]).unwrap() - 8.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn rotation_moves_the_burgers_axis() {
        let dp = DislocationParams::new(8.0 * PI, 0.25).unwrap().rotated(0.5 * PI);
        assert!((dp.g(&[0.0, 1.0]) - 5.0 / 3.0).abs() < 1e-12);
        assert!((dislocation_phi_closed(&dp, &[0.0, 1.0]).unwrap() - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn k1_values() {
        let unit = Shape::ball(&[0.0, 0.0], 1.0);
        let iso = DislocationParams::new(8.0 * PI, 0.0).unwrap();
        assert!((dislocation_k1(&iso, &unit, &[0.0, 1.0]).unwrap() - 2.0).abs() < 1e-14);
        let dp = DislocationParams::new(8.0 * PI, 0.25).unwrap();
        assert!((dislocation_k1(&dp, &unit, &[1.0, 0.0]).unwrap() - 4.0 / 3.0).abs() < 1e-12);
        for k in 0..16 {
            let a = 0.4 * k as f64;
            assert!(dislocation_k1(&dp, &unit, &[a.cos(), a.sin()]).unwrap() > 0.0);
        }
    }

    #[test]
    fn circle_front_follows_reference() {
        let disc = Shape::ball(&[0.0, 0.0], 1.0);
        let mut f = FrontTracker::from_shape(&disc, Anisotropy::Isotropic, 0.02).unwrap();
        f.run_to(0.1);
        let mean = f.points.iter().map(|p| p[0].hypot(p[1])).sum::<f64>() / f.points.len() as f64;
        assert!((mean - 0.6f64.sqrt()).abs() < 1e-3, "{mean}");
    }

    #[test]
    fn spline_reproduces_circle() {
        let n = 40;
        let pts: Vec<[f64; 2]> = (0..n).map(|k| {
            let a = 2.0 * PI * k as f64 / n as f64;
            [a.cos(), a.sin()]
        }).collect();
        let f = FrontTracker::new(pts, Anisotropy::Isotropic, 0.05).unwrap();
        for p in &f.points {
            assert!((p[0].hypot(p[1]) - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn hausdorff_of_offset_circles() {
        let circle = |r: f64| Polyline {
            points: (0..400).map(|k| {
                let a = 2.0 * PI * k as f64 / 400.0;
                [r * a.cos(), r * a.sin()]
            }).collect(),
            closed: true,
        };
        let d = hausdorff(&[circle(1.0)], &[circle(0.9)]);
        assert!((d - 0.1).abs() < 1e-3, "{d}");
        assert_eq!(hausdorff(&[], &[]), 0.0);
    }
}
