//! Level-set solver for the nonlocal curvature flow in the plane.
//!
//! The field is a clamped signed distance, negative inside the evolving set.
//! Each step convolves the occupancy of `{u <= q}` with the cell-averaged
//! kernel, evaluates `K = λ - 2 (k ⋆ χ)` at the projection of every band
//! point onto its level, and advances `u` with a Godunov upwind scheme.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, unsupported, Result};
use crate::fftconv::Convolver;
use crate::grid::GridSpec;
use crate::kernel_table::{Averaging, KernelTable};
use crate::kernels::{beta_scale, lambda_total, omega, sigma_scale, Anisotropy, KernelParams};
use crate::quadrature::cube_halfspace_fraction;
use crate::shapes::Shape;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetField {
    pub spec: GridSpec,
    pub u: Vec<f64>,
    pub band_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    None,
    #[default]
    Sigma,
    Beta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub p: KernelParams,
    #[serde(default)]
    pub g: Anisotropy,
    #[serde(default)]
    pub scaling: Scaling,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_redistance")]
    pub redistance_every: usize,
    pub t_end: f64,
    pub snapshot_dt: f64,
}

fn default_cfl() -> f64 {
    0.5
}

fn default_levels() -> usize {
    1
}

fn default_redistance() -> usize {
    5
}

impl FlowConfig {
    pub fn new(p: KernelParams, t_end: f64, snapshot_dt: f64) -> Self {
        FlowConfig {
            p,
            g: Anisotropy::Isotropic,
            scaling: Scaling::Sigma,
            cfl: default_cfl(),
            levels: default_levels(),
            redistance_every: default_redistance(),
            t_end,
            snapshot_dt,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.p.validate()?;
        if self.p.d != 2 {
            return unsupported("the level-set flow runs in the plane");
        }
        self.g.check_dim(2)?;
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return invalid(format!("cfl must lie in (0, 1], got {}", self.cfl));
        }
        if self.levels == 0 {
            return invalid("levels must be >= 1");
        }
        if self.redistance_every == 0 {
            return invalid("redistance_every must be >= 1");
        }
        if !(self.t_end >= 0.0) || !(self.snapshot_dt > 0.0) {
            return invalid("t_end must be >= 0 and snapshot_dt > 0");
        }
        Ok(())
    }

    /// Divisor turning `K` into the normal speed.
    pub fn time_scale(&self) -> Result<f64> {
        match self.scaling {
            Scaling::None => Ok(1.0),
            Scaling::Sigma => sigma_scale(&self.p),
            Scaling::Beta => {
                if self.p.s <= 1.0 {
                    return invalid("beta scaling needs s > 1");
                }
                beta_scale(self.p.d, self.p.s, self.p.r)
            }
        }
    }
}

/// Band half-width `8 max(r, 4h)`.
pub fn default_band(r: f64, h: f64) -> f64 {
    8.0 * r.max(4.0 * h)
}

pub fn init_levelset(shape: &Shape, grid: &GridSpec, band: f64) -> Result<LevelSetField> {
    shape.validate()?;
    if grid.dim() != 2 || shape.dim() != 2 {
        return unsupported("the level-set flow runs in the plane");
    }
    let Some((lo, hi)) = shape.bounds() else {
        return invalid("the initial set must be bounded");
    };
    let (glo, ghi) = grid.extent();
    for i in 0..2 {
        if lo[i] < glo[i] || hi[i] > ghi[i] {
            return Err(crate::Error::OutsideGrid { side: format!("x{}-{}", i + 1, if lo[i] < glo[i] { "min" } else { "max" }) });
        }
    }
    if !(band > 0.0) {
        return invalid("band width must be > 0");
    }
    let u: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|k| shape.sdf(&grid.center(&grid.unflatten(k))).clamp(-band, band))
        .collect();
    let field = LevelSetField { spec: grid.clone(), u, band_width: band };
    Ok(match shape {
        Shape::Union { .. } | Shape::Difference { .. } => redistance(&field).0,
        _ => field,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
}

impl Polyline {
    /// Shoelace area, positive for counter-clockwise loops.
    pub fn signed_area(&self) -> f64 {
        if !self.closed || self.points.len() < 3 {
            return 0.0;
        }
        let n = self.points.len();
        0.5 * (0..n)
            .map(|i| {
                let a = self.points[i];
                let b = self.points[(i + 1) % n];
                a[0] * b[1] - a[1] * b[0]
            })
            .sum::<f64>()
    }

    pub fn segments(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.points.len();
        let m = if self.closed { n } else { n.saturating_sub(1) };
        (0..m).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }
}

/// Marching squares on the cell-centre lattice, chained into polylines.
pub fn zero_contour(field: &LevelSetField) -> Vec<Polyline> {
    level_contour(field, 0.0)
}

/// Polylines of `{u = q}`; the inside `{u < q}` lies to the left.
pub fn level_contour(field: &LevelSetField, q: f64) -> Vec<Polyline> {
    let spec = &field.spec;
    let (nx, ny) = (spec.dims[0], spec.dims[1]);
    let u = &field.u;
    let at = |i: usize, j: usize| u[i * ny + j] - q;
    let pos = |i: usize, j: usize| spec.center(&[i, j]);
    // edge keys: (i, j, 0) joins (i,j)-(i+1,j), (i, j, 1) joins (i,j)-(i,j+1)
    let crossing = |i: usize, j: usize, dir: usize| -> [f64; 2] {
        let (i2, j2) = if dir == 0 { (i + 1, j) } else { (i, j + 1) };
        let (a, b) = (at(i, j), at(i2, j2));
        let t = if a == b { 0.5 } else { a / (a - b) };
        let p = pos(i, j);
        let q = pos(i2, j2);
        [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
    };
    let mut segs: Vec<((usize, usize, usize), (usize, usize, usize))> = Vec::new();
    for i in 0..nx.saturating_sub(1) {
        for j in 0..ny.saturating_sub(1) {
            let v = [at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)];
            let mut code = 0;
            for (b, x) in v.iter().enumerate() {
                if *x < 0.0 {
                    code |= 1 << b;
                }
            }
            if code == 0 || code == 15 {
                continue;
            }
            // square edges in order: bottom (v0-v1), right (v1-v2), top (v3-v2), left (v0-v3)
            let e = [(i, j, 0), (i + 1, j, 1), (i, j + 1, 0), (i, j, 1)];
            let pairs: &[(usize, usize)] = match code {
                1 | 14 => &[(3, 0)],
                2 | 13 => &[(0, 1)],
                3 | 12 => &[(3, 1)],
                4 | 11 => &[(1, 2)],
                6 | 9 => &[(0, 2)],
                7 | 8 => &[(3, 2)],
                5 | 10 => {
                    let centre = 0.25 * v.iter().sum::<f64>();
                    // decide whether the two inside corners connect through the centre
                    if (centre < 0.0) == (code == 5) {
                        &[(3, 2), (0, 1)]
                    } else {
                        &[(3, 0), (1, 2)]
                    }
                }
                _ => &[],
            };
            for (a, b) in pairs {
                segs.push((e[*a], e[*b]));
            }
        }
    }
    chain(&segs, &crossing)
}

fn chain(segs: &[((usize, usize, usize), (usize, usize, usize))], crossing: &dyn Fn(usize, usize, usize) -> [f64; 2]) -> Vec<Polyline> {
    let mut adj: HashMap<(usize, usize, usize), Vec<usize>> = HashMap::new();
    for (k, (a, b)) in segs.iter().enumerate() {
        adj.entry(*a).or_default().push(k);
        adj.entry(*b).or_default().push(k);
    }
    let mut used = vec![false; segs.len()];
    let mut out = Vec::new();
    let other = |k: usize, e: (usize, usize, usize)| if segs[k].0 == e { segs[k].1 } else { segs[k].0 };
    // open chains first start at edges with a single segment
    let mut starts: Vec<(usize, usize, usize)> = adj.iter().filter(|(_, v)| v.len() == 1).map(|(e, _)| *e).collect();
    starts.sort();
    let walk = |start: (usize, usize, usize), first: usize, used: &mut Vec<bool>| -> (Vec<[f64; 2]>, bool) {
        let mut pts = vec![crossing(start.0, start.1, start.2)];
        let mut e = start;
        let mut k = first;
        loop {
            used[k] = true;
            e = other(k, e);
            if e == start {
                return (pts, true);
            }
            pts.push(crossing(e.0, e.1, e.2));
            match adj[&e].iter().find(|s| !used[**s]) {
                Some(n) => k = *n,
                None => return (pts, false),
            }
        }
    };
    for s in starts {
        if let Some(k) = adj[&s].iter().copied().find(|k| !used[*k]) {
            let (points, closed) = walk(s, k, &mut used);
            out.push(Polyline { points, closed });
        }
    }
    for k in 0..segs.len() {
        if !used[k] {
            let (points, closed) = walk(segs[k].0, k, &mut used);
            out.push(Polyline { points, closed });
        }
    }
    out
}

/// Total enclosed area of the closed contours, counting holes negatively.
pub fn contour_area(contours: &[Polyline]) -> f64 {
    // marching squares orients every loop the same way around the inside
    contours.iter().map(|c| c.signed_area()).sum::<f64>().abs()
}

/// Rebuilds the clamped signed distance from the zero contour. Returns the
/// new field and whether the contour was empty.
pub fn redistance(field: &LevelSetField) -> (LevelSetField, bool) {
    let spec = &field.spec;
    let w = field.band_width;
    let contours = zero_contour(field);
    if contours.is_empty() {
        let u = vec![w; field.u.len()];
        return (LevelSetField { u, ..field.clone() }, true);
    }
    let (nx, ny) = (spec.dims[0], spec.dims[1]);
    let h = spec.h;
    let near = contour_feet(spec, &contours, 1.5 * h);
    let fixed: Vec<bool> = near.iter().map(|f| f.is_some()).collect();
    let mut dist: Vec<f64> = near.iter().map(|f| f.map_or(f64::INFINITY, |f| f.dist)).collect();
    fast_sweep(&mut dist, &fixed, nx, ny, h, w);
    let u: Vec<f64> = field
        .u
        .iter()
        .zip(&dist)
        .map(|(old, dd)| {
            let m = dd.min(w);
            if *old < 0.0 {
                -m
            } else {
                m
            }
        })
        .collect();
    (LevelSetField { u, ..field.clone() }, false)
}

fn fast_sweep(dist: &mut [f64], fixed: &[bool], nx: usize, ny: usize, h: f64, cap: f64) {
    let get = |d: &[f64], i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i >= nx as isize || j >= ny as isize {
            f64::INFINITY
        } else {
            d[i as usize * ny + j as usize]
        }
    };
    for _ in 0..2 {
        for sweep in 0..4 {
            let irev = sweep & 1 == 1;
            let jrev = sweep & 2 == 2;
            for ii in 0..nx {
                let i = if irev { nx - 1 - ii } else { ii };
                for jj in 0..ny {
                    let j = if jrev { ny - 1 - jj } else { jj };
                    let k = i * ny + j;
                    if fixed[k] {
                        continue;
                    }
                    let (ic, jc) = (i as isize, j as isize);
                    let a = get(dist, ic - 1, jc).min(get(dist, ic + 1, jc));
                    let b = get(dist, ic, jc - 1).min(get(dist, ic, jc + 1));
                    if !a.is_finite() && !b.is_finite() {
                        continue;
                    }
                    let cand = if (a - b).abs() >= h {
                        a.min(b) + h
                    } else {
                        0.5 * (a + b + (2.0 * h * h - (a - b) * (a - b)).sqrt())
                    };
                    if cand < dist[k] {
                        dist[k] = cand.min(2.0 * cap);
                    }
                }
            }
        }
    }
}

pub fn point_segment(p: &[f64; 2], a: &[f64; 2], b: &[f64; 2]) -> f64 {
    segment_foot(p, a, b).1
}

/// Parameter of the closest point on `[a, b]` and the distance to it.
fn segment_foot(p: &[f64; 2], a: &[f64; 2], b: &[f64; 2]) -> (f64, f64) {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let l2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if l2 > 0.0 { ((ap[0] * ab[0] + ap[1] * ab[1]) / l2).clamp(0.0, 1.0) } else { 0.0 };
    let q = [a[0] + t * ab[0] - p[0], a[1] + t * ab[1] - p[1]];
    (t, (q[0] * q[0] + q[1] * q[1]).sqrt())
}

/// Closest contour point for a cell within `reach` of some polyline.
#[derive(Debug, Clone, Copy)]
struct Foot {
    line: usize,
    seg: usize,
    t: f64,
    dist: f64,
}

fn contour_feet(spec: &GridSpec, contours: &[Polyline], reach: f64) -> Vec<Option<Foot>> {
    let (nx, ny) = (spec.dims[0], spec.dims[1]);
    let h = spec.h;
    let mut out: Vec<Option<Foot>> = vec![None; nx * ny];
    for (line, c) in contours.iter().enumerate() {
        for (seg, (a, b)) in c.segments().enumerate() {
            let lo = [a[0].min(b[0]) - reach, a[1].min(b[1]) - reach];
            let hi = [a[0].max(b[0]) + reach, a[1].max(b[1]) + reach];
            let i0 = (((lo[0] - spec.origin[0]) / h - 0.5).floor().max(0.0)) as usize;
            let j0 = (((lo[1] - spec.origin[1]) / h - 0.5).floor().max(0.0)) as usize;
            let i1 = ((((hi[0] - spec.origin[0]) / h - 0.5).ceil().max(0.0)) as usize).min(nx - 1);
            let j1 = ((((hi[1] - spec.origin[1]) / h - 0.5).ceil().max(0.0)) as usize).min(ny - 1);
            for i in i0..=i1 {
                for j in j0..=j1 {
                    let p = spec.center(&[i, j]);
                    let (t, dist) = segment_foot(&[p[0], p[1]], &a, &b);
                    let k = i * ny + j;
                    if dist <= reach && out[k].map_or(true, |f| dist < f.dist) {
                        out[k] = Some(Foot { line, seg, t, dist });
                    }
                }
            }
        }
    }
    out
}

/// Time stepper holding the kernel convolution for one grid.
pub struct FlowSolver {
    pub cfg: FlowConfig,
    pub field: LevelSetField,
    pub t: f64,
    pub steps: usize,
    since_redistance: usize,
    conv: Convolver,
    lambda: f64,
    scale: f64,
}

impl FlowSolver {
    pub fn new(field: LevelSetField, cfg: FlowConfig) -> Result<Self> {
        cfg.validate()?;
        let spec = &field.spec;
        if spec.dim() != 2 {
            return unsupported("the level-set flow runs in the plane");
        }
        let h = spec.h;
        if h > cfg.p.r / 4.0 * (1.0 + 1e-12) {
            return Err(crate::Error::Guard(format!("h <= r/4 violated: h = {h}, r = {}", cfg.p.r)));
        }
        let half: Vec<usize> = spec.dims.iter().map(|n| n - 1).collect();
        let table = KernelTable::build(&cfg.p, &cfg.g, 2, h, &half, Averaging::Cell)?;
        let conv = Convolver::new(&spec.dims, &table)?;
        let lambda = lambda_total(&cfg.p, &cfg.g)?;
        let scale = cfg.time_scale()?;
        Ok(FlowSolver { cfg, field, t: 0.0, steps: 0, since_redistance: 0, conv, lambda, scale })
    }

    /// Normal speeds near each level (outward positive), `NaN` elsewhere.
    /// The speed is evaluated on the level's polyline and carried to every
    /// cell of its bin from the closest contour point.
    pub fn velocity(&self) -> Vec<f64> {
        let f = &self.field;
        let spec = &f.spec;
        let (levels, edges) = self.levels();
        let bin = |v: f64| edges.iter().filter(|e| v >= **e).count();
        let mut reach = vec![self.tube(); levels.len()];
        if levels.len() > 1 {
            reach.iter_mut().for_each(|r| *r = 0.0);
            for v in f.u.iter().filter(|v| v.abs() < f.band_width) {
                let l = bin(*v);
                reach[l] = reach[l].max((v - levels[l]).abs() + spec.h);
            }
        }
        let mut speed = vec![f64::NAN; f.u.len()];
        let grads = central_gradients(f);
        for (li, q) in levels.iter().enumerate() {
            let frac = sublevel_fractions(f, &grads, *q);
            let c = self.conv.apply(&frac);
            let contours = level_contour(f, *q);
            let vertex: Vec<Vec<f64>> = contours
                .iter()
                .map(|pl| {
                    pl.points
                        .iter()
                        .map(|y| bicubic(spec, &c, y).map_or(f64::NAN, |cy| -(self.lambda - 2.0 * cy) / self.scale))
                        .collect()
                })
                .collect();
            for (k, foot) in contour_feet(spec, &contours, reach[li]).into_iter().enumerate() {
                let Some(ft) = foot else { continue };
                if f.u[k].abs() >= f.band_width || bin(f.u[k]) != li {
                    continue;
                }
                let vs = &vertex[ft.line];
                let v = (1.0 - ft.t) * vs[ft.seg] + ft.t * vs[(ft.seg + 1) % vs.len()];
                if v.is_finite() {
                    speed[k] = v;
                }
            }
        }
        speed
    }

    /// Half-width of the tube around the zero level that receives a speed
    /// when `L = 1`; it covers the front's travel between redistance passes.
    fn tube(&self) -> f64 {
        let h = self.field.spec.h;
        ((self.cfg.cfl * self.cfg.redistance_every as f64 + 3.0) * h).min(self.field.band_width)
    }

    /// Bin levels at the mid quantiles of the band values, and the interior
    /// bin edges.
    fn levels(&self) -> (Vec<f64>, Vec<f64>) {
        let l = self.cfg.levels;
        if l == 1 {
            return (vec![0.0], Vec::new());
        }
        let w = self.field.band_width;
        let mut band: Vec<f64> = self.field.u.iter().copied().filter(|v| v.abs() < w).collect();
        if band.is_empty() {
            return (vec![0.0], Vec::new());
        }
        band.sort_by(f64::total_cmp);
        let n = band.len();
        let levels = (0..l).map(|i| band[((2 * i + 1) * n) / (2 * l)]).collect();
        let edges = (1..l).map(|i| band[(i * n) / l]).collect();
        (levels, edges)
    }

    fn needs_redistance(&self) -> bool {
        if self.since_redistance >= self.cfg.redistance_every {
            return true;
        }
        let f = &self.field;
        let h = f.spec.h;
        let grads = central_gradients(f);
        f.u.iter().zip(&grads).any(|(v, g)| v.abs() <= 2.0 * h && (g[0] * g[0] + g[1] * g[1]).sqrt() < 0.1)
    }

    /// One explicit step of at most `dt_cap`; returns the step taken, or
    /// `None` once the contour has vanished.
    pub fn step(&mut self, dt_cap: f64) -> Option<f64> {
        if self.needs_redistance() {
            let (f, extinct) = redistance(&self.field);
            self.field = f;
            self.since_redistance = 0;
            if extinct {
                return None;
            }
        }
        let speed = self.velocity();
        let h = self.field.spec.h;
        let (up, down) = godunov(&self.field);
        let mut vmax: f64 = 0.0;
        for k in 0..speed.len() {
            if speed[k].is_finite() {
                let gn = if speed[k] > 0.0 { up[k] } else { down[k] };
                vmax = vmax.max(speed[k].abs() * gn);
            }
        }
        let dt = if vmax > 0.0 { (self.cfg.cfl * h / vmax).min(dt_cap) } else { dt_cap };
        self.advance(&speed, &up, &down, dt);
        Some(dt)
    }

    /// Step with a prescribed `dt`, ignoring the CFL bound.
    pub fn step_fixed(&mut self, dt: f64) -> Option<f64> {
        if self.needs_redistance() {
            let (f, extinct) = redistance(&self.field);
            self.field = f;
            self.since_redistance = 0;
            if extinct {
                return None;
            }
        }
        let speed = self.velocity();
        let (up, down) = godunov(&self.field);
        self.advance(&speed, &up, &down, dt);
        Some(dt)
    }

    fn advance(&mut self, speed: &[f64], up: &[f64], down: &[f64], dt: f64) {
        let w = self.field.band_width;
        for k in 0..speed.len() {
            if speed[k].is_finite() {
                let gn = if speed[k] > 0.0 { up[k] } else { down[k] };
                self.field.u[k] = (self.field.u[k] - dt * speed[k] * gn).clamp(-w, w);
            }
        }
        self.t += dt;
        self.steps += 1;
        self.since_redistance += 1;
    }
}

fn central_gradients(f: &LevelSetField) -> Vec<[f64; 2]> {
    let (nx, ny) = (f.spec.dims[0], f.spec.dims[1]);
    let h = f.spec.h;
    let u = &f.u;
    (0..u.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / ny, k % ny);
            let gx = if i == 0 {
                (u[k + ny] - u[k]) / h
            } else if i + 1 == nx {
                (u[k] - u[k - ny]) / h
            } else {
                (u[k + ny] - u[k - ny]) / (2.0 * h)
            };
            let gy = if j == 0 {
                (u[k + 1] - u[k]) / h
            } else if j + 1 == ny {
                (u[k] - u[k - 1]) / h
            } else {
                (u[k + 1] - u[k - 1]) / (2.0 * h)
            };
            [gx, gy]
        })
        .collect()
}

/// Godunov gradient norms for outward (`up`) and inward (`down`) motion.
fn godunov(f: &LevelSetField) -> (Vec<f64>, Vec<f64>) {
    let (nx, ny) = (f.spec.dims[0], f.spec.dims[1]);
    let h = f.spec.h;
    let u = &f.u;
    let pairs: Vec<(f64, f64)> = (0..u.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / ny, k % ny);
            let dxm = if i > 0 { (u[k] - u[k - ny]) / h } else { 0.0 };
            let dxp = if i + 1 < nx { (u[k + ny] - u[k]) / h } else { 0.0 };
            let dym = if j > 0 { (u[k] - u[k - 1]) / h } else { 0.0 };
            let dyp = if j + 1 < ny { (u[k + 1] - u[k]) / h } else { 0.0 };
            let up = (dxm.max(0.0).powi(2) + dxp.min(0.0).powi(2) + dym.max(0.0).powi(2) + dyp.min(0.0).powi(2)).sqrt();
            let down = (dxm.min(0.0).powi(2) + dxp.max(0.0).powi(2) + dym.min(0.0).powi(2) + dyp.max(0.0).powi(2)).sqrt();
            (up, down)
        })
        .collect();
    pairs.into_iter().unzip()
}

fn sublevel_fractions(f: &LevelSetField, grads: &[[f64; 2]], q: f64) -> Vec<f64> {
    let h = f.spec.h;
    f.u.par_iter()
        .zip(grads)
        .map(|(v, g)| {
            let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
            let reach = 0.5 * h * (gn * std::f64::consts::SQRT_2).max(1.0);
            if *v - q <= -reach {
                1.0
            } else if *v - q >= reach {
                0.0
            } else if gn < 1e-12 {
                if *v <= q {
                    1.0
                } else {
                    0.0
                }
            } else {
                cube_halfspace_fraction(&[g[0] * h, g[1] * h], q - v)
            }
        })
        .collect()
}

/// Cubic convolution interpolation of cell-centred data.
fn bicubic(spec: &GridSpec, data: &[f64], y: &[f64; 2]) -> Option<f64> {
    let (nx, ny) = (spec.dims[0], spec.dims[1]);
    let gx = (y[0] - spec.origin[0]) / spec.h - 0.5;
    let gy = (y[1] - spec.origin[1]) / spec.h - 0.5;
    let i0 = gx.floor();
    let j0 = gy.floor();
    if i0 < 1.0 || j0 < 1.0 || i0 + 2.0 >= nx as f64 || j0 + 2.0 >= ny as f64 {
        return None;
    }
    let (tx, ty) = (gx - i0, gy - j0);
    let wx = keys(tx);
    let wy = keys(ty);
    let (i0, j0) = (i0 as usize, j0 as usize);
    let mut acc = 0.0;
    for a in 0..4 {
        let row = (i0 + a - 1) * ny;
        let mut r = 0.0;
        for b in 0..4 {
            r += wy[b] * data[row + j0 + b - 1];
        }
        acc += wx[a] * r;
    }
    Some(acc)
}

fn keys(t: f64) -> [f64; 4] {
    let w = |x: f64| {
        let x = x.abs();
        if x <= 1.0 {
            1.5 * x * x * x - 2.5 * x * x + 1.0
        } else if x < 2.0 {
            -0.5 * x * x * x + 2.5 * x * x - 4.0 * x + 2.0
        } else {
            0.0
        }
    };
    [w(1.0 + t), w(t), w(1.0 - t), w(2.0 - t)]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl RadiusStats {
    pub fn of(contours: &[Polyline], centre: &[f64; 2]) -> Option<RadiusStats> {
        let mut n = 0usize;
        let mut sum = 0.0;
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for c in contours {
            for p in &c.points {
                let r = ((p[0] - centre[0]).powi(2) + (p[1] - centre[1]).powi(2)).sqrt();
                n += 1;
                sum += r;
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        (n > 0).then(|| RadiusStats { mean: sum / n as f64, min: lo, max: hi })
    }

    /// `(max - min) / mean`.
    pub fn circularity_deviation(&self) -> f64 {
        (self.max - self.min) / self.mean
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub contours: Vec<Vec<Polyline>>,
    pub radius_stats: Vec<Option<RadiusStats>>,
    pub centre: [f64; 2],
    pub extinction_time: Option<f64>,
    pub steps: usize,
}

impl Trajectory {
    /// Snapshot index at time `t`, matched to 1e-12.
    pub fn at(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
    }
}

pub fn run_flow(shape: &Shape, grid: &GridSpec, cfg: &FlowConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let band = default_band(cfg.p.r, grid.h);
    let field = init_levelset(shape, grid, band)?;
    let centre = match shape.bounds() {
        Some((lo, hi)) => [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])],
        None => [0.0, 0.0],
    };
    run_field(field, cfg, centre)
}

pub fn run_field(field: LevelSetField, cfg: &FlowConfig, centre: [f64; 2]) -> Result<Trajectory> {
    let mut solver = FlowSolver::new(field, cfg.clone())?;
    let h = solver.field.spec.h;
    let mut traj = Trajectory { times: Vec::new(), contours: Vec::new(), radius_stats: Vec::new(), centre, extinction_time: None, steps: 0 };
    let record = |s: &FlowSolver, traj: &mut Trajectory| -> bool {
        let c = zero_contour(&s.field);
        let alive = !c.is_empty() && contour_area(&c) >= (3.0 * h).powi(2);
        traj.times.push(s.t);
        traj.radius_stats.push(RadiusStats::of(&c, &centre));
        traj.contours.push(c);
        alive
    };
    if !record(&solver, &mut traj) {
        traj.extinction_time = Some(0.0);
        return Ok(traj);
    }
    let mut k = 1usize;
    while solver.t < cfg.t_end * (1.0 - 1e-12) {
        let next = (k as f64 * cfg.snapshot_dt).min(cfg.t_end);
        let cap = next - solver.t;
        match solver.step(cap) {
            None => {
                traj.extinction_time = Some(solver.t);
                break;
            }
            Some(_) => {}
        }
        if solver.t >= next * (1.0 - 1e-12) {
            solver.t = next;
            k += 1;
            if !record(&solver, &mut traj) {
                traj.extinction_time = Some(solver.t);
                break;
            }
        }
    }
    traj.steps = solver.steps;
    Ok(traj)
}

/// One step from `field`; returns the new field and the step size.
pub fn flow_step(field: &LevelSetField, cfg: &FlowConfig) -> Result<(LevelSetField, f64)> {
    let mut s = FlowSolver::new(field.clone(), cfg.clone())?;
    let dt = s.step(f64::INFINITY).unwrap_or(0.0);
    Ok((s.field, dt))
}

/// Radius of a ball moving by `ω_{d-1}` times its mean curvature, scaled by
/// the constant value of `g`; the flag marks extinction.
pub fn mcf_reference(r0: f64, d: usize, t: f64, g: &Anisotropy) -> Result<(f64, bool)> {
    if d < 2 {
        return invalid("d must be >= 2");
    }
    let Some(c) = g.constant_value() else {
        return unsupported("reference flow needs a direction-independent g");
    };
    let v = r0 * r0 - 2.0 * c * omega(d - 1) * (d as f64 - 1.0) * t;
    Ok(if v <= 0.0 { (0.0, true) } else { (v.sqrt(), false) })
}
