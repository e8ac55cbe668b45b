//! One-dimensional quadrature rules, compensated summation and the
//! exact volume of a cube cut by a half-space.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let hl = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let dx = hl * XGK[j];
        let s = f(c - dx) + f(c + dx);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * hl, ((rk - rg) * hl).abs())
}

/// Adaptive Gauss-Kronrod (7, 15) quadrature on [a, b].
///
/// `tol` is an absolute tolerance on the total. A piece is also accepted once
/// its error estimate reaches roundoff relative to its value; bisection stops
/// at depth 48.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let mut stack = vec![(a, b, tol, 0u32)];
    let mut total = Sum::default();
    while let Some((lo, hi, t, depth)) = stack.pop() {
        let (v, err) = kronrod(&mut f, lo, hi);
        if err <= t.max(64.0 * f64::EPSILON * v.abs()).max(1e-300) || depth >= 48 || (hi - lo).abs() < 1e-15 * (lo.abs() + hi.abs()) {
            total.add(v);
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, 0.5 * t, depth + 1));
            stack.push((lo, mid, 0.5 * t, depth + 1));
        }
    }
    total.value()
}

/// Adaptive quadrature over consecutive breakpoints, which must be sorted.
pub fn integrate_pieces<F: FnMut(f64) -> f64>(mut f: F, breaks: &[f64], tol: f64) -> f64 {
    let n = breaks.len().saturating_sub(1).max(1) as f64;
    let mut s = Sum::default();
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            s.add(integrate(&mut f, w[0], w[1], tol / n));
        }
    }
    s.value()
}

/// Neumaier compensated sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct Sum {
    s: f64,
    c: f64,
}

impl Sum {
    pub fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    pub fn value(&self) -> f64 {
        self.s + self.c
    }
}

impl std::iter::FromIterator<f64> for Sum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Sum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Volume fraction of the unit cube `[-1/2, 1/2]^d` lying in `{y : a·y <= c}`.
pub fn cube_halfspace_fraction(a: &[f64], c: f64) -> f64 {
    let amax = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if amax == 0.0 {
        return if c >= 0.0 { 1.0 } else { 0.0 };
    }
    // shift to [0,1]^d and flip negative coefficients
    let mut b = c + 0.5 * a.iter().sum::<f64>();
    let mut coef = Vec::with_capacity(a.len());
    for &ai in a {
        if ai.abs() <= 1e-7 * amax {
            continue;
        }
        if ai < 0.0 {
            b -= ai;
            coef.push(-ai);
        } else {
            coef.push(ai);
        }
    }
    let total: f64 = coef.iter().sum();
    if b <= 0.0 {
        return 0.0;
    }
    if b >= total {
        return 1.0;
    }
    // complement symmetry keeps b on the small side
    let (b, flip) = if b > 0.5 * total { (total - b, true) } else { (b, false) };
    let m = coef.len();
    let mut fact = 1.0;
    let mut prod = 1.0;
    for (i, &ai) in coef.iter().enumerate() {
        fact *= (i + 1) as f64;
        prod *= ai;
    }
    let mut acc = Sum::default();
    for mask in 0u32..(1u32 << m) {
        let mut shift = 0.0;
        for (i, &ai) in coef.iter().enumerate() {
            if mask & (1 << i) != 0 {
                shift += ai;
            }
        }
        let t = b - shift;
        if t > 0.0 {
            let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            acc.add(sign * t.powi(m as i32));
        }
    }
    let v = (acc.value() / (fact * prod)).clamp(0.0, 1.0);
    if flip {
        1.0 - v
    } else {
        v
    }
}

/// Least-squares line `y ≈ a x + b`; returns `(a, b, rms residual)`.
pub fn affine_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    if x.len() < 2 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let a = sxy / sxx;
    let b = my - a * mx;
    let res = (x.iter().zip(y).map(|(u, v)| (v - a * u - b).powi(2)).sum::<f64>() / n).sqrt();
    (a, b, res)
}
