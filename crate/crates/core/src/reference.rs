//! High-accuracy quadratures for convex shapes, used as oracles for the grid
//! and lattice code paths.

use std::f64::consts::PI;

use crate::error::{unsupported, Result};
use crate::kernels::{Anisotropy, KernelParams};
use crate::quadrature::integrate_pieces;
use crate::shapes::Shape;

/// Length of the chord `{x + tθ : 0 < t < L} ⊂ E` for `x ∈ ∂E`, or 0 when
/// the ray leaves the set immediately.
pub fn chord_length(shape: &Shape, x: &[f64], theta: &[f64]) -> Result<f64> {
    match shape {
        Shape::Ball { center, radius } => {
            let y: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
            let b: f64 = y.iter().zip(theta).map(|(a, t)| a * t).sum();
            let c: f64 = y.iter().map(|a| a * a).sum::<f64>() - radius * radius;
            let disc = b * b - c;
            Ok(if disc <= 0.0 { 0.0 } else { (-b + disc.sqrt()).max(0.0) })
        }
        Shape::Ellipse { center, semi_axes } => {
            let y = [x[0] - center[0], x[1] - center[1]];
            let a = [1.0 / (semi_axes[0] * semi_axes[0]), 1.0 / (semi_axes[1] * semi_axes[1])];
            let qa = a[0] * theta[0] * theta[0] + a[1] * theta[1] * theta[1];
            let qb = a[0] * y[0] * theta[0] + a[1] * y[1] * theta[1];
            let qc = a[0] * y[0] * y[0] + a[1] * y[1] * y[1] - 1.0;
            let disc = qb * qb - qa * qc;
            Ok(if disc <= 0.0 { 0.0 } else { ((-qb + disc.sqrt()) / qa).max(0.0) })
        }
        Shape::Rectangle { min, max } => {
            let mut l = f64::INFINITY;
            for i in 0..x.len() {
                let t = if theta[i] > 0.0 {
                    (max[i] - x[i]) / theta[i]
                } else if theta[i] < 0.0 {
                    (min[i] - x[i]) / theta[i]
                } else if x[i] < min[i] || x[i] > max[i] {
                    0.0
                } else {
                    f64::INFINITY
                };
                l = l.min(t.max(0.0));
            }
            Ok(l)
        }
        Shape::Translate { shape, offset } => {
            let y: Vec<f64> = x.iter().zip(offset).map(|(a, o)| a - o).collect();
            chord_length(shape, &y, theta)
        }
        _ => unsupported("chord lengths are available for balls, ellipses and rectangles"),
    }
}

/// `K(x, E) = ∫_{S^{d-1}} g(θ) (2 T(L(θ)) - T(0)) dθ` for convex `E`, where
/// `T` is the radial tail and `L` the chord length from `x`.
pub fn polar_curvature(shape: &Shape, x: &[f64], p: &KernelParams, g: &Anisotropy, tol: f64) -> Result<f64> {
    p.validate()?;
    g.check_dim(p.d)?;
    let t0 = p.radial_tail(0.0);
    match p.d {
        2 => {
            // pieces fine enough to isolate kinks at corners and at L = r
            let n = 512;
            let breaks: Vec<f64> = (0..=n).map(|i| 2.0 * PI * i as f64 / n as f64).collect();
            let mut err = None;
            let v = integrate_pieces(
                |th: f64| {
                    let dir = [th.cos(), th.sin()];
                    match chord_length(shape, x, &dir) {
                        Ok(l) => g.eval(&dir) * (2.0 * p.radial_tail(l) - t0),
                        Err(e) => {
                            err.get_or_insert(e);
                            0.0
                        }
                    }
                },
                &breaks,
                tol,
            );
            match err {
                Some(e) => Err(e),
                None => Ok(v),
            }
        }
        3 => {
            let Shape::Ball { center, radius } = shape else {
                return unsupported("the 3-d oracle handles balls only");
            };
            let y: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
            let rho = y.iter().map(|a| a * a).sum::<f64>().sqrt();
            // ψ is the angle from the inward normal; the chord is 2ρ cos ψ
            let scale = rho.min(*radius);
            let f = |psi: f64| {
                let l = (2.0 * scale * psi.cos()).max(0.0);
                2.0 * PI * psi.sin() * (2.0 * p.radial_tail(l) - t0)
            };
            let mut breaks = vec![0.0, 0.5 * PI, PI];
            if p.r < 2.0 * scale {
                breaks.insert(1, (p.r / (2.0 * scale)).acos());
            }
            Ok(integrate_pieces(f, &breaks, tol))
        }
        d => unsupported(format!("polar curvature oracle for d = {d}")),
    }
}

/// Covariogram of the disc of radius `rr`: `|B ∩ (B + z)|` at `|z| = t`.
pub fn disc_covariogram(rr: f64, t: f64) -> f64 {
    if t >= 2.0 * rr {
        return 0.0;
    }
    let u = t / (2.0 * rr);
    2.0 * rr * rr * u.acos() - 0.5 * t * (4.0 * rr * rr - t * t).max(0.0).sqrt()
}

/// `J = ∫ g(ẑ) k(z) (|E| - |E ∩ (E + z)|) dz` for a disc, restricted to
/// `|z| > inner`.
pub fn disc_perimeter_from(p: &KernelParams, g: &Anisotropy, rr: f64, inner: f64, tol: f64) -> Result<f64> {
    p.validate()?;
    if p.d != 2 {
        return unsupported("the disc covariogram oracle is two-dimensional");
    }
    let area = PI * rr * rr;
    let ang = g.sphere_integral(2)?;
    let f = |t: f64| p.profile(t) * t * (area - disc_covariogram(rr, t));
    let mut breaks: Vec<f64> = vec![inner, p.r, 2.0 * rr];
    breaks.retain(|b| *b >= inner);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut v = 0.0;
    if breaks.len() >= 2 && breaks[0] < 2.0 * rr {
        let upper: Vec<f64> = breaks.iter().copied().filter(|b| *b <= 2.0 * rr).collect();
        v += integrate_pieces(f, &upper, tol);
    }
    v += area * p.radial_tail(inner.max(2.0 * rr));
    Ok(ang * v)
}

pub fn disc_perimeter(p: &KernelParams, g: &Anisotropy, rr: f64, tol: f64) -> Result<f64> {
    disc_perimeter_from(p, g, rr, 0.0, tol)
}

/// The far part `F(E)`, interactions at distance greater than 1.
pub fn disc_far_part(p: &KernelParams, g: &Anisotropy, rr: f64, tol: f64) -> Result<f64> {
    disc_perimeter_from(p, g, rr, 1.0, tol)
}

/// Same functional for the axis-aligned rectangle with sides `a`, `b`, using
/// `|E ∩ (E + z)| = (a - |z_1|)_+ (b - |z_2|)_+`.
pub fn rectangle_perimeter(p: &KernelParams, g: &Anisotropy, a: f64, b: f64, tol: f64) -> Result<f64> {
    p.validate()?;
    g.check_dim(2)?;
    if p.d != 2 {
        return unsupported("the rectangle covariogram oracle is two-dimensional");
    }
    let area = a * b;
    let radial = |c: f64, s: f64| {
        let la = if c > 0.0 { a / c } else { f64::INFINITY };
        let lb = if s > 0.0 { b / s } else { f64::INFINITY };
        let lmax = la.max(lb);
        let lmin = la.min(lb);
        let f = |t: f64| p.profile(t) * t * (area - (a - t * c).max(0.0) * (b - t * s).max(0.0));
        let mut br = vec![0.0, p.r.min(lmin), lmin];
        if lmax.is_finite() {
            br.push(lmax);
        }
        if p.r < lmax {
            br.push(p.r);
        }
        br.sort_by(f64::total_cmp);
        br.dedup();
        let top = *br.last().unwrap();
        let inner = integrate_pieces(f, &br, 1e-3 * tol);
        let outer = if top.is_finite() { area * p.radial_tail(top) } else { 0.0 };
        inner + outer
    };
    // symmetric in each quadrant of directions up to g
    let h = |th: f64| {
        let (s, c) = th.sin_cos();
        let pieces = [[c, s], [-c, s], [-c, -s], [c, -s]];
        pieces.iter().map(|d| g.eval(d)).sum::<f64>() * radial(c.abs(), s.abs())
    };
    let corner = b.atan2(a);
    Ok(integrate_pieces(h, &[0.0, corner, 0.5 * PI], tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::sigma_scale;

    #[test]
    fn chord_of_disc() {
        let s = Shape::ball(&[0.0, 0.0], 1.0);
        let l = chord_length(&s, &[1.0, 0.0], &[-1.0, 0.0]).unwrap();
        assert!((l - 2.0).abs() < 1e-14);
        assert_eq!(chord_length(&s, &[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        let e = Shape::ellipse(&[0.0, 0.0], 2.0, 1.0);
        let th = [-(0.5f64).sqrt(), (0.5f64).sqrt()];
        let l = chord_length(&e, &[2.0, 0.0], &th).unwrap();
        let q = [2.0 + l * th[0], l * th[1]];
        assert!((q[0] * q[0] / 4.0 + q[1] * q[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn covariogram_limits() {
        assert!((disc_covariogram(1.0, 0.0) - PI).abs() < 1e-14);
        assert_eq!(disc_covariogram(1.0, 2.0), 0.0);
    }

    #[test]
    fn halfspace_like_ball_is_nearly_flat() {
        // a huge ball looks flat at scale r
        let p = KernelParams::new(2, 2.0, 0.1).unwrap();
        let s = Shape::ball(&[-1e4, 0.0], 1e4);
        let k = polar_curvature(&s, &[0.0, 0.0], &p, &Anisotropy::Isotropic, 1e-10).unwrap();
        assert!(k.abs() < 1e-2, "{k}");
    }

    #[test]
    fn disc_curvature_limit() {
        let p = KernelParams::new(2, 2.0, 0.01).unwrap();
        let s = Shape::ball(&[0.0, 0.0], 1.0);
        let k = polar_curvature(&s, &[1.0, 0.0], &p, &Anisotropy::Isotropic, 1e-9).unwrap();
        let ratio = k / sigma_scale(&p).unwrap();
        assert!((ratio - 2.0).abs() < 0.01, "{ratio}");
    }

    #[test]
    fn rectangle_matches_disc_scaling() {
        // the square's value divided by its perimeter approaches the disc's
        let p = KernelParams::new(2, 2.0, 0.02).unwrap();
        let sq = rectangle_perimeter(&p, &Anisotropy::Isotropic, 1.0, 1.0, 1e-8).unwrap();
        let sigma = sigma_scale(&p).unwrap();
        assert!((sq / sigma / 8.0 - 1.0).abs() < 0.05, "{}", sq / sigma / 8.0);
    }

    #[test]
    fn disc_s1_asymptotics() {
        let p = KernelParams::new(2, 1.0, 1e-3).unwrap();
        let v = disc_perimeter(&p, &Anisotropy::Isotropic, 1.0, 1e-9).unwrap();
        let lead = 4.0 * PI * (p.r.ln().abs() + 4.0 / 3.0);
        assert!((v - lead - 4.85).abs() < 0.05, "{}", v - lead);
    }
}
