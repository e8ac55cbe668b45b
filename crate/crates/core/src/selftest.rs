//! Runtime checks of the kernel module's identities, shared by the command
//! line runner and the acceptance tests.

use std::f64::consts::{E, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kernels::*;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Largest error seen, relative unless the check says otherwise.
    pub error: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfTestReport {
    pub checks: Vec<Check>,
}

impl SelfTestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

struct Acc {
    checks: Vec<Check>,
}

impl Acc {
    fn push(&mut self, name: &str, errors: impl IntoIterator<Item = f64>, tolerance: f64) {
        let error = errors.into_iter().fold(0.0f64, |m, e| if e.is_nan() { f64::INFINITY } else { m.max(e) });
        self.checks.push(Check { name: name.to_string(), passed: error <= tolerance, error, tolerance });
    }
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// Runs every kernel identity with samples drawn from `seed`.
pub fn kernel_selftest(seed: u64) -> Result<SelfTestReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Acc { checks: Vec::new() };
    let p = KernelParams::new(2, 2.0, 0.5)?;
    acc.push(
        "kernel values",
        [rel(eval_kernel(&p, 0.25), 16.0), rel(eval_kernel(&p, 0.5), 16.0), rel(eval_kernel(&p, 1.0), 1.0)],
        1e-14,
    );

    let mut scaling = Vec::new();
    let mut continuity = Vec::new();
    let mut monotone = Vec::new();
    let mut lambda = Vec::new();
    let mut beta = Vec::new();
    let mut div = Vec::new();
    let mut t_cont = Vec::new();
    for _ in 0..200 {
        let d = rng.gen_range(2..=4usize);
        let s = if rng.gen_bool(0.25) { 1.0 } else { rng.gen_range(1.0..3.0) };
        let r = 10f64.powf(rng.gen_range(-3.0..0.0));
        let p = KernelParams::new(d, s, r)?;
        let l = 10f64.powf(rng.gen_range(-1.0..1.0));
        let t = r * 10f64.powf(rng.gen_range(-1.0..1.0));
        let q = p.with_r(r / l);
        scaling.push(rel(eval_kernel(&p, l * t), l.powf(-(d as f64) - s) * eval_kernel(&q, t)));
        continuity.push(rel(eval_kernel(&p, r * (1.0 - 1e-15)), eval_kernel(&p, r * (1.0 + 1e-15))));
        let t2 = t * (1.0 + rng.gen_range(0.0..1.0));
        monotone.push((eval_kernel(&p, t2) - eval_kernel(&p, t)).max(0.0));
        let iso = (d as f64 + s) * omega(d) / (s * r.powf(s));
        lambda.push(rel(lambda_total(&p, &Anisotropy::Isotropic)?, iso));
        if s > 1.0 && r < 1.0 {
            beta.push((beta_scale(d, s, r)? - sigma_scale(&p)? - alpha_const(d, s)).abs() / sigma_scale(&p)?.max(1.0));
        }
        let u = random_unit(&mut rng, d);
        let inner: Vec<f64> = u.iter().map(|v| v * r * (1.0 - 1e-15)).collect();
        let outer: Vec<f64> = u.iter().map(|v| v * r * (1.0 + 1e-15)).collect();
        let (a, b) = (field_t(&p, &inner)?, field_t(&p, &outer)?);
        t_cont.push(rel(norm2(&a), norm2(&b)));
        // the step scales with |x|; stay ten steps away from the kink at |x| = r
        let mut rho = r * 10f64.powf(rng.gen_range(-0.7..0.7));
        if (rho - r).abs() < 1e-4 * rho {
            rho = r * 1.5;
        }
        let step = 1e-5 * rho;
        let x: Vec<f64> = u.iter().map(|v| v * rho).collect();
        let mut divergence = 0.0;
        for i in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += step;
            xm[i] -= step;
            divergence += (field_t(&p, &xp)?[i] - field_t(&p, &xm)?[i]) / (2.0 * step);
        }
        div.push(rel(divergence, eval_kernel(&p, rho)));
    }
    acc.push("scaling identity", scaling, 1e-12);
    acc.push("continuity at t = r", continuity, 1e-12);
    acc.push("monotone in t", monotone, 0.0);
    acc.push("continuity of T at |x| = r", t_cont, 1e-12);
    acc.push("Div T = k", div, 1e-6);
    acc.push("isotropic lambda", lambda, 1e-12);
    acc.push("beta = sigma + alpha", beta, 1e-12);

    acc.push(
        "lambda values",
        [
            rel(lambda_total(&KernelParams::new(2, 1.0, 1.0)?, &Anisotropy::Isotropic)?, 3.0 * PI),
            rel(lambda_total(&KernelParams::new(2, 2.0, 0.5)?, &Anisotropy::Isotropic)?, 8.0 * PI),
            rel(lambda_total(&KernelParams::new(2, 2.0, 0.5)?, &Anisotropy::dislocation(8.0 * PI, 0.0)?)?, 8.0 * PI),
        ],
        1e-12,
    );
    acc.push(
        "sigma values",
        [
            rel(sigma_scale(&KernelParams::new(2, 1.0, E.powi(-2))?)?, 2.0),
            rel(sigma_scale(&KernelParams::new(2, 2.0, 0.1)?)?, 40.0 / 3.0),
            rel(sigma_scale(&KernelParams::new(3, 2.0, 0.5)?)?, 2.5),
        ],
        1e-12,
    );
    acc.push(
        "alpha values",
        [rel(alpha_const(2, 1.0), 4.0 / 3.0), rel(alpha_const(2, 2.0), -1.0), rel(alpha_const(5, 1.0), 7.0 / 6.0)],
        1e-14,
    );
    acc.push(
        "beta values",
        [rel(beta_scale(2, 2.0, 0.1)?, 37.0 / 3.0), rel(beta_scale(2, 1.0 + 1e-9, 0.1)?, 0.1f64.ln().abs() + 1.0 / 3.0)],
        1e-8,
    );

    let gs = [
        Anisotropy::Isotropic,
        Anisotropy::dislocation(8.0 * PI, 0.25)?,
        Anisotropy::tabulated((0..16).map(|k| 1.0 + 0.5 * (k as f64 * 0.7).sin().abs()).collect())?,
    ];
    let mut even = Vec::new();
    for g in &gs {
        for _ in 0..1000 {
            let xi = random_unit(&mut rng, 2);
            let neg: Vec<f64> = xi.iter().map(|v| -v).collect();
            even.push((g.eval(&xi) - g.eval(&neg)).abs());
        }
    }
    acc.push("evenness of g", even, 0.0);
    acc.push(
        "phi values",
        [
            rel(phi_density(&Anisotropy::Isotropic, &[0.6, 0.8], DEFAULT_PHI_ORDER)?, 2.0),
            rel(phi_density(&Anisotropy::Isotropic, &[0.0, 0.6, 0.8], DEFAULT_PHI_ORDER)?, PI),
            rel(phi_density(&gs[1], &[1.0, 0.0], DEFAULT_PHI_ORDER)?, 8.0 / 3.0),
        ],
        1e-10,
    );
    Ok(SelfTestReport { checks: acc.checks })
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        let rep = kernel_selftest(7).unwrap();
        let bad: Vec<_> = rep.checks.iter().filter(|c| !c.passed).collect();
        assert!(bad.is_empty(), "{bad:?}");
    }
}
