use std::f64::consts::PI;

use proptest::prelude::*;

use corerad::curvature::{nonlocal_curvature, CurvatureQuery};
use corerad::dislocation::{hausdorff, DislocationParams};
use corerad::flow::{init_levelset, redistance, zero_contour, Polyline};
use corerad::grid::{GridSet, GridSpec};
use corerad::kernels::*;
use corerad::perimeter::{halving_chain, nonlocal_perimeter, nonlocal_perimeter_with, ConvolutionPath};
use corerad::quadrature::cube_halfspace_fraction;
use corerad::shapes::Shape;

fn params() -> impl Strategy<Value = KernelParams> {
    (2usize..=4, 1.0f64..3.0, 1e-3f64..1.0).prop_map(|(d, s, r)| KernelParams::new(d, s, r).unwrap())
}

fn small_set(max_n: usize) -> impl Strategy<Value = GridSet> {
    (4usize..=max_n, 4usize..=max_n).prop_flat_map(|(nx, ny)| {
        prop::collection::vec(prop_oneof![3 => Just(0.0), 2 => Just(1.0), 1 => 0.01f64..1.0], nx * ny).prop_map(move |frac| {
            let spec = GridSpec::new(vec![0.0, 0.0], 0.05, vec![nx, ny]).unwrap();
            GridSet::new(spec, frac).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_scaling(p in params(), l in 0.1f64..10.0, t in 1e-4f64..10.0) {
        let lhs = eval_kernel(&p, l * t);
        let rhs = l.powf(-(p.d as f64) - p.s) * eval_kernel(&p.with_r(p.r / l), t);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs);
    }

    #[test]
    fn kernel_nonincreasing(p in params(), t in 0.0f64..5.0, dt in 0.0f64..5.0) {
        prop_assert!(eval_kernel(&p, t + dt) <= eval_kernel(&p, t));
    }

    #[test]
    fn beta_is_sigma_plus_alpha(d in 2usize..=5, s in 1.001f64..4.0, r in 1e-4f64..0.99) {
        let p = KernelParams::new(d, s, r).unwrap();
        let b = beta_scale(d, s, r).unwrap();
        let sum = sigma_scale(&p).unwrap() + alpha_const(d, s);
        prop_assert!((b - sum).abs() <= 1e-12 * sum.abs().max(1.0));
    }

    #[test]
    fn dislocation_g_even_and_positive(mu in 0.1f64..50.0, nu in -0.99f64..0.49, a in 0.0f64..(2.0 * PI)) {
        let g = Anisotropy::Dislocation(DislocationParams::new(mu, nu).unwrap());
        let xi = [a.cos(), a.sin()];
        let v = g.eval(&xi);
        prop_assert!(v > 0.0);
        prop_assert_eq!(v, g.eval(&[-xi[0], -xi[1]]));
    }

    #[test]
    fn tabulated_g_even(half in prop::collection::vec((0.1f64..5.0, 0.1f64..5.0), 1..12), a in 0.0f64..(2.0 * PI)) {
        let values: Vec<f64> = half.iter().flat_map(|(x, y)| [*x, *y]).collect();
        let g = Anisotropy::tabulated(values).unwrap();
        let xi = [a.cos(), a.sin()];
        prop_assert_eq!(g.eval(&xi), g.eval(&[-xi[0], -xi[1]]));
    }

    #[test]
    fn cube_fraction_complements(a in prop::collection::vec(-3.0f64..3.0, 2..=3), c in -3.0f64..3.0) {
        let f = cube_halfspace_fraction(&a, c);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!((f + cube_halfspace_fraction(&neg, -c) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn fft_equals_direct(e in small_set(12), s in 1.0f64..3.0, k in 2.0f64..8.0) {
        let p = KernelParams::new(2, s, k * 0.05).unwrap();
        let a = nonlocal_perimeter_with(&e, &p, &Anisotropy::Isotropic, 4.0, ConvolutionPath::Fft).unwrap().value;
        let b = nonlocal_perimeter_with(&e, &p, &Anisotropy::Isotropic, 4.0, ConvolutionPath::Direct).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-300));
    }

    #[test]
    fn perimeter_nonnegative_and_shift_invariant(e in small_set(10), dx in 0isize..4, dy in 0isize..4) {
        // pad so the shift never drops cells
        let n = [e.spec.dims[0] + 4, e.spec.dims[1] + 4];
        let spec = GridSpec::new(vec![0.0, 0.0], e.spec.h, n.to_vec()).unwrap();
        let mut frac = vec![0.0; n[0] * n[1]];
        for i in 0..e.spec.dims[0] {
            for j in 0..e.spec.dims[1] {
                frac[i * n[1] + j] = e.frac[i * e.spec.dims[1] + j];
            }
        }
        let big = GridSet::new(spec, frac).unwrap();
        let p = KernelParams::new(2, 1.5, 0.2).unwrap();
        let a = nonlocal_perimeter(&big, &p, &Anisotropy::Isotropic, 4.0).unwrap().value;
        let b = nonlocal_perimeter(&big.shifted(&[dx, dy]), &p, &Anisotropy::Isotropic, 4.0).unwrap().value;
        prop_assert!(a >= -1e-12);
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-12));
    }

    #[test]
    fn curvature_translation_invariant(dx in -2.0f64..2.0, dy in -2.0f64..2.0, a in 0.0f64..(2.0 * PI)) {
        let p = KernelParams::new(2, 2.0, 0.1).unwrap();
        let disc = Shape::ball(&[0.0, 0.0], 1.0);
        let moved = Shape::ball(&[dx, dy], 1.0);
        let x = [a.cos(), a.sin()];
        let k0 = nonlocal_curvature(&CurvatureQuery::shape(&disc, &x, p, Anisotropy::Isotropic)).unwrap().value;
        let k1 = nonlocal_curvature(&CurvatureQuery::shape(&moved, &[x[0] + dx, x[1] + dy], p, Anisotropy::Isotropic)).unwrap().value;
        prop_assert!((k0 - k1).abs() <= 1e-6 * k0.abs());
        prop_assert!(k0 > 0.0);
    }

    #[test]
    fn halving_chain_shape(start in 1e-3f64..1.0, ratio in 1.0f64..1000.0) {
        let end = start / ratio;
        let c = halving_chain(start, end);
        prop_assert_eq!(c[0], start);
        prop_assert_eq!(*c.last().unwrap(), end);
        prop_assert!(c.windows(2).all(|w| w[1] < w[0] && w[1] >= 0.4 * w[0] * (1.0 - 1e-12)));
    }

    #[test]
    fn hausdorff_is_a_metric_on_samples(r1 in 0.2f64..2.0, r2 in 0.2f64..2.0) {
        let circle = |r: f64| Polyline {
            points: (0..256).map(|k| {
                let a = 2.0 * PI * k as f64 / 256.0;
                [r * a.cos(), r * a.sin()]
            }).collect(),
            closed: true,
        };
        let (a, b) = (vec![circle(r1)], vec![circle(r2)]);
        prop_assert_eq!(hausdorff(&a, &a), 0.0);
        prop_assert!((hausdorff(&a, &b) - hausdorff(&b, &a)).abs() <= 1e-15);
        prop_assert!((hausdorff(&a, &b) - (r1 - r2).abs()).abs() <= 1e-3 * r1.max(r2));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn contour_of_disc_field(cx in -0.2f64..0.2, cy in -0.2f64..0.2, rr in 0.3f64..0.8) {
        let h = 1.0 / 64.0;
        let grid = GridSpec::covering(&[-1.0, -1.0], &[1.0, 1.0], h, 0).unwrap();
        let field = init_levelset(&Shape::ball(&[cx, cy], rr), &grid, 0.3).unwrap();
        let lines = zero_contour(&field);
        prop_assert_eq!(lines.len(), 1);
        prop_assert!(lines[0].closed);
        for q in &lines[0].points {
            let d = ((q[0] - cx).powi(2) + (q[1] - cy).powi(2)).sqrt();
            prop_assert!((d - rr).abs() <= 0.1 * h);
        }
        // redistancing a distance field leaves the contour in place
        let (again, extinct) = redistance(&field);
        prop_assert!(!extinct);
        prop_assert!(hausdorff(&lines, &zero_contour(&again)) <= 0.05 * h);
    }
}
