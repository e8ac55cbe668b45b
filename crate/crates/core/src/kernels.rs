//! Core-radius kernels, their normalization constants and the anisotropic
//! densities built on top of them.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dislocation::DislocationParams;
use crate::error::{domain, invalid, unsupported, Result};
use crate::quadrature::{gauss_legendre, integrate_pieces};

/// Dimension, exponent and core radius of `k(t) = min(r, t)^{-d-s}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    pub d: usize,
    pub s: f64,
    pub r: f64,
}

impl KernelParams {
    pub fn new(d: usize, s: f64, r: f64) -> Result<Self> {
        let p = KernelParams { d, s, r };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return invalid(format!("d must be >= 2, got {}", self.d));
        }
        if !(self.s >= 1.0) || !self.s.is_finite() {
            return invalid(format!("s must be >= 1, got {}", self.s));
        }
        if !(self.r > 0.0) || !self.r.is_finite() {
            return invalid(format!("r must be > 0, got {}", self.r));
        }
        Ok(())
    }

    pub fn with_r(&self, r: f64) -> Self {
        KernelParams { r, ..*self }
    }

    /// Radial profile `k(t)`.
    #[inline]
    pub fn profile(&self, t: f64) -> f64 {
        let e = -(self.d as f64) - self.s;
        if t <= self.r {
            self.r.powf(e)
        } else {
            t.powf(e)
        }
    }

    /// `∫_t^∞ k(ρ) ρ^{d-1} dρ`.
    pub fn radial_tail(&self, t: f64) -> f64 {
        let d = self.d as f64;
        let s = self.s;
        if t <= self.r {
            self.r.powf(-s) * (1.0 / d + 1.0 / s) - t.powf(d) * self.r.powf(-d - s) / d
        } else {
            t.powf(-s) / s
        }
    }
}

/// Volume of the unit ball in `R^d`.
pub fn omega(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / d as f64 * omega(d - 2),
    }
}

/// `H^{d-1}` measure of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    d as f64 * omega(d)
}

pub fn eval_kernel(p: &KernelParams, t: f64) -> f64 {
    p.profile(t)
}

pub fn eval_aniso_kernel(p: &KernelParams, g: &Anisotropy, z: &[f64]) -> Result<f64> {
    let n = norm(z);
    if n == 0.0 {
        return domain("kernel evaluated at the zero vector");
    }
    let xi: Vec<f64> = z.iter().map(|v| v / n).collect();
    Ok(g.eval(&xi) * p.profile(n))
}

/// Total mass `∫ g(z/|z|) k(|z|) dz`.
pub fn lambda_total(p: &KernelParams, g: &Anisotropy) -> Result<f64> {
    let d = p.d as f64;
    Ok(g.sphere_integral(p.d)? * (d + p.s) / (d * p.s * p.r.powf(p.s)))
}

/// Leading-order scale of the perimeter as the core radius vanishes.
pub fn sigma_scale(p: &KernelParams) -> Result<f64> {
    let d = p.d as f64;
    if p.s == 1.0 {
        if p.r >= 1.0 {
            return domain(format!("s = 1 requires r < 1, got r = {}", p.r));
        }
        Ok(p.r.ln().abs())
    } else {
        Ok((d + p.s) / (d + 1.0) * p.r.powf(1.0 - p.s) / (p.s - 1.0))
    }
}

pub fn alpha_const(d: usize, s: f64) -> f64 {
    let d = d as f64;
    if s == 1.0 {
        (d + 2.0) / (d + 1.0)
    } else {
        -1.0 / (s - 1.0)
    }
}

/// Joint-limit scale for `s > 1`, `0 < r < 1`.
pub fn beta_scale(d: usize, s: f64, r: f64) -> Result<f64> {
    if !(s > 1.0) {
        return domain(format!("beta requires s > 1, got {s}"));
    }
    if !(r > 0.0 && r < 1.0) {
        return domain(format!("beta requires 0 < r < 1, got {r}"));
    }
    let df = d as f64;
    // (r^{1-s} - 1)/(s - 1) without cancellation as s -> 1
    let e = (s - 1.0) * (-r.ln());
    let q = (-r.ln()) * e.exp_m1() / e;
    Ok((df + s) / (df + 1.0) * q + 1.0 / (df + 1.0))
}

/// Vector field whose divergence is the kernel.
pub fn field_t(p: &KernelParams, x: &[f64]) -> Result<Vec<f64>> {
    let n = norm(x);
    if n == 0.0 {
        return domain("T evaluated at the zero vector");
    }
    let d = p.d as f64;
    let s = p.s;
    if n >= p.r {
        let c = -1.0 / (s * n.powf(d + s));
        Ok(x.iter().map(|v| c * v).collect())
    } else {
        let a = 1.0 / (d * p.r.powf(d + s));
        let b = (d + s) / (d * s * p.r.powf(s)) / n.powf(d);
        Ok(x.iter().map(|v| (a - b) * v).collect())
    }
}

/// Even, positive surface density on the unit sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Anisotropy {
    Isotropic,
    /// Values at angles `2πk/n`, linearly interpolated (d = 2).
    Tabulated { values: Vec<f64> },
    Dislocation(DislocationParams),
}

impl Default for Anisotropy {
    fn default() -> Self {
        Anisotropy::Isotropic
    }
}

impl Anisotropy {
    /// Table on uniform angles, symmetrized so that `g(ξ) = g(-ξ)`.
    pub fn tabulated(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        if n < 2 || n % 2 != 0 {
            return invalid("tabulated anisotropy needs an even number of values");
        }
        let sym: Vec<f64> = (0..n).map(|i| 0.5 * (values[i] + values[(i + n / 2) % n])).collect();
        if sym.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return invalid("tabulated anisotropy must be positive");
        }
        Ok(Anisotropy::Tabulated { values: sym })
    }

    pub fn dislocation(mu: f64, poisson: f64) -> Result<Self> {
        Ok(Anisotropy::Dislocation(DislocationParams::new(mu, poisson)?))
    }

    /// Re-checks invariants of a deserialized value.
    pub fn validated(self) -> Result<Self> {
        match self {
            Anisotropy::Isotropic => Ok(self),
            Anisotropy::Tabulated { values } => Anisotropy::tabulated(values),
            Anisotropy::Dislocation(dp) => {
                dp.validate()?;
                Ok(Anisotropy::Dislocation(dp))
            }
        }
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        match self {
            Anisotropy::Isotropic => Ok(()),
            _ if d == 2 => Ok(()),
            _ => unsupported(format!("anisotropic densities are planar, got d = {d}")),
        }
    }

    /// `g(ξ)`; `ξ` is expected to be a unit vector.
    #[inline]
    pub fn eval(&self, xi: &[f64]) -> f64 {
        match self {
            Anisotropy::Isotropic => 1.0,
            Anisotropy::Tabulated { values } => {
                let n = values.len();
                // fold onto the upper half plane so that ±ξ evaluate identically
                let flip = xi[1] < 0.0 || (xi[1] == 0.0 && xi[0] < 0.0);
                let (x, y) = if flip { (-xi[0], -xi[1]) } else { (xi[0], xi[1]) };
                let a = y.atan2(x).max(0.0);
                let u = a / (2.0 * PI) * n as f64;
                let i = (u.floor() as usize).min(n - 1);
                let f = u - i as f64;
                values[i] * (1.0 - f) + values[(i + 1) % n] * f
            }
            Anisotropy::Dislocation(dp) => dp.g(xi),
        }
    }

    /// `∫_{S^{d-1}} g`.
    pub fn sphere_integral(&self, d: usize) -> Result<f64> {
        self.check_dim(d)?;
        Ok(match self {
            Anisotropy::Isotropic => sphere_area(d),
            Anisotropy::Tabulated { values } => 2.0 * PI * values.iter().sum::<f64>() / values.len() as f64,
            Anisotropy::Dislocation(dp) => {
                let (a, b) = dp.coefficients();
                dp.mu / (8.0 * PI) * (a + b) * PI
            }
        })
    }

    /// Symmetric under each reflection `ξ_i -> -ξ_i`.
    pub fn is_axis_symmetric(&self) -> bool {
        match self {
            Anisotropy::Isotropic => true,
            Anisotropy::Tabulated { values } => {
                let n = values.len();
                n % 4 == 0 && (0..n).all(|i| values[i] == values[(n / 2 + n - i) % n])
            }
            Anisotropy::Dislocation(dp) => dp.burgers_angle == 0.0,
        }
    }

    /// The constant value of `g` when it does not depend on direction.
    pub fn constant_value(&self) -> Option<f64> {
        match self {
            Anisotropy::Isotropic => Some(1.0),
            Anisotropy::Tabulated { values } => {
                if values.iter().all(|v| *v == values[0]) {
                    Some(values[0])
                } else {
                    None
                }
            }
            Anisotropy::Dislocation(dp) => {
                let (a, b) = dp.coefficients();
                if a == b {
                    Some(dp.mu / (8.0 * PI) * a)
                } else {
                    None
                }
            }
        }
    }
}

pub const DEFAULT_PHI_ORDER: usize = 32;

/// Surface density `φ(ν) = ∫_{ξ·ν ≥ 0} g(ξ) (ξ·ν) dξ` by quadrature.
pub fn phi_density(g: &Anisotropy, nu: &[f64], quad_order: usize) -> Result<f64> {
    let d = nu.len();
    if (norm(nu) - 1.0).abs() > 1e-12 {
        return domain("normal must be a unit vector");
    }
    g.check_dim(d)?;
    let order = quad_order.max(2);
    match d {
        2 => {
            let th = nu[1].atan2(nu[0]);
            let n = order;
            let breaks: Vec<f64> = (0..=n).map(|i| -0.5 * PI + PI * i as f64 / n as f64).collect();
            let f = |psi: f64| {
                let a = th + psi;
                g.eval(&[a.cos(), a.sin()]) * psi.cos()
            };
            Ok(integrate_pieces(f, &breaks, 1e-14))
        }
        3 => {
            let (e1, e2) = orthonormal_complement(nu);
            let (x, w) = gauss_legendre(order);
            let m = 2 * order;
            let mut acc = 0.0;
            for (xi, wi) in x.iter().zip(&w) {
                // c = cos of the polar angle from ν, mapped to [0, 1]
                let c = 0.5 * (xi + 1.0);
                let sn = (1.0 - c * c).max(0.0).sqrt();
                let mut ring = 0.0;
                for k in 0..m {
                    let ph = 2.0 * PI * k as f64 / m as f64;
                    let v: Vec<f64> = (0..3)
                        .map(|i| c * nu[i] + sn * (ph.cos() * e1[i] + ph.sin() * e2[i]))
                        .collect();
                    ring += g.eval(&v);
                }
                acc += 0.5 * wi * c * ring * 2.0 * PI / m as f64;
            }
            Ok(acc)
        }
        _ => unsupported(format!("phi density quadrature for d = {d}")),
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn orthonormal_complement(nu: &[f64]) -> ([f64; 3], [f64; 3]) {
    let a = if nu[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let dot = a[0] * nu[0] + a[1] * nu[1] + a[2] * nu[2];
    let mut e1 = [a[0] - dot * nu[0], a[1] - dot * nu[1], a[2] - dot * nu[2]];
    let n1 = norm(&e1);
    e1.iter_mut().for_each(|v| *v /= n1);
    let e2 = [
        nu[1] * e1[2] - nu[2] * e1[1],
        nu[2] * e1[0] - nu[0] * e1[2],
        nu[0] * e1[1] - nu[1] * e1[0],
    ];
    (e1, e2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn kernel_values() {
        let p = KernelParams::new(2, 2.0, 0.5).unwrap();
        assert_eq!(eval_kernel(&p, 0.25), 16.0);
        assert_eq!(eval_kernel(&p, 0.5), 16.0);
        assert_eq!(eval_kernel(&p, 1.0), 1.0);
    }

    #[test]
    fn omega_values() {
        assert!(close(omega(2), PI, 1e-15));
        assert!(close(omega(3), 4.0 * PI / 3.0, 1e-15));
        assert!(close(omega(4), PI * PI / 2.0, 1e-15));
        assert!(close(omega(1), 2.0, 0.0));
    }

    #[test]
    fn constants() {
        let iso = Anisotropy::Isotropic;
        assert!(close(lambda_total(&KernelParams::new(2, 1.0, 1.0).unwrap(), &iso).unwrap(), 3.0 * PI, 1e-14));
        assert!(close(lambda_total(&KernelParams::new(2, 2.0, 0.5).unwrap(), &iso).unwrap(), 8.0 * PI, 1e-14));
        assert!(close(sigma_scale(&KernelParams::new(2, 1.0, (-2.0f64).exp()).unwrap()).unwrap(), 2.0, 1e-14));
        assert!(close(sigma_scale(&KernelParams::new(2, 2.0, 0.1).unwrap()).unwrap(), 40.0 / 3.0, 1e-14));
        assert!(close(sigma_scale(&KernelParams::new(3, 2.0, 0.5).unwrap()).unwrap(), 2.5, 1e-14));
        assert!(sigma_scale(&KernelParams::new(2, 1.0, 1.0).unwrap()).is_err());
        assert!(close(alpha_const(2, 1.0), 4.0 / 3.0, 1e-15));
        assert!(close(alpha_const(2, 2.0), -1.0, 1e-15));
        assert!(close(alpha_const(5, 1.0), 7.0 / 6.0, 1e-15));
        assert!(close(beta_scale(2, 2.0, 0.1).unwrap(), 37.0 / 3.0, 1e-14));
        assert!(beta_scale(2, 1.0, 0.1).is_err());
    }

    #[test]
    fn beta_limit_at_s_one() {
        let target = 0.1f64.ln().abs() + 1.0 / 3.0;
        let b = beta_scale(2, 1.0 + 1e-9, 0.1).unwrap();
        assert!((b - target).abs() < 1e-8);
        assert!((target - 2.6359).abs() < 1e-4);
    }

    #[test]
    fn t_field_branches() {
        let p = KernelParams::new(2, 1.0, 0.5).unwrap();
        let t = field_t(&p, &[1.0, 0.0]).unwrap();
        assert!(close(t[0], -1.0, 1e-15) && t[1] == 0.0);
        assert!(field_t(&p, &[0.0, 0.0]).is_err());
        let x = [0.3, 0.4];
        let a = field_t(&p, &x).unwrap();
        let expect = -1.0 / p.s * 0.5f64.powf(1.0 - 2.0 - p.s);
        assert!(close(a[0] / 0.6, expect, 1e-12));
    }

    #[test]
    fn aniso_kernel_values() {
        let p = KernelParams::new(2, 1.0, 0.5).unwrap();
        let g = Anisotropy::dislocation(8.0 * PI, 0.25).unwrap();
        let v = eval_aniso_kernel(&p, &g, &[1.0, 0.0]).unwrap();
        assert!(close(v, 5.0 / 3.0, 1e-14));
        let v = eval_aniso_kernel(&p, &g, &[0.25, 0.0]).unwrap();
        assert!(close(v, 40.0 / 3.0, 1e-14));
        let p2 = KernelParams::new(2, 2.0, 0.5).unwrap();
        assert_eq!(eval_aniso_kernel(&p2, &Anisotropy::Isotropic, &[1.0, 0.0]).unwrap(), 1.0);
        assert!(eval_aniso_kernel(&p2, &g, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn phi_isotropic() {
        let g = Anisotropy::Isotropic;
        let v = phi_density(&g, &[0.6, 0.8], DEFAULT_PHI_ORDER).unwrap();
        assert!(close(v, 2.0, 1e-12));
        let v3 = phi_density(&g, &[0.0, 0.6, 0.8], DEFAULT_PHI_ORDER).unwrap();
        assert!(close(v3, PI, 1e-12));
        assert!(phi_density(&g, &[1.0, 1.0], 8).is_err());
    }

    #[test]
    fn phi_dislocation_e1() {
        let g = Anisotropy::dislocation(8.0 * PI, 0.25).unwrap();
        let v = phi_density(&g, &[1.0, 0.0], DEFAULT_PHI_ORDER).unwrap();
        assert!(close(v, 8.0 / 3.0, 1e-12));
    }

    #[test]
    fn tabulated_is_symmetrized() {
        let g = Anisotropy::tabulated(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        for k in 0..16 {
            let a = k as f64 * 0.37;
            let x = [a.cos(), a.sin()];
            assert!((g.eval(&x) - g.eval(&[-x[0], -x[1]])).abs() < 1e-14);
        }
        assert!(Anisotropy::tabulated(vec![1.0, 2.0, 3.0]).is_err());
        assert!(Anisotropy::tabulated(vec![1.0, -2.0]).is_err());
    }

    #[test]
    fn sphere_integral_matches_quadrature() {
        let g = Anisotropy::tabulated(vec![1.0, 2.0, 1.5, 3.0, 0.5, 1.0]).unwrap();
        let q = integrate_pieces(|a: f64| g.eval(&[a.cos(), a.sin()]), &(0..=6).map(|i| i as f64 * PI / 3.0).collect::<Vec<_>>(), 1e-14);
        assert!(close(g.sphere_integral(2).unwrap(), q, 1e-12));
        let gd = Anisotropy::dislocation(3.0, 0.1).unwrap();
        let q = integrate_pieces(|a: f64| gd.eval(&[a.cos(), a.sin()]), &[0.0, PI, 2.0 * PI], 1e-14);
        assert!(close(gd.sphere_integral(2).unwrap(), q, 1e-12));
    }
}
