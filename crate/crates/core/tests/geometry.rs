use moving_spde::geometry::*;
use moving_spde::linalg::{dot, symmetric_eigen};
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;

fn ellipse(a: f64, b: f64) -> OscillatingEllipse<f64> {
    OscillatingEllipse::new(a, b, 0.0, 1.0, 1.0).unwrap()
}

#[test]
fn grid_fields_on_growing_circle() {
    let c = DilatingCircle::<f64>::new(1.0, 1.0, DilationProfile::Linear, 1.0).unwrap();
    let g = build_grid(&c, 32, 0.5).unwrap();
    for j in 0..32 {
        assert!((g.sqrt_g[j] - 1.5).abs() < 1e-14);
        assert!((g.rn_derivative[j] - 1.5).abs() < 1e-14);
        let th = g.nodes().theta()[j];
        assert!((g.velocity[j][0] - th.cos()).abs() < 1e-14);
    }
}

#[test]
fn laplace_spectrum_on_circle() {
    for r in [1.0, 2.0] {
        let c = DilatingCircle::<f64>::fixed(r, 1.0).unwrap();
        let g = build_grid(&c, 64, 0.0).unwrap();
        let spec = laplace_spectrum(&g);
        assert!(spec[0].abs() < 1e-10);
        for k in 1..=6usize {
            let expect = (k * k) as f64 / (r * r);
            for idx in [2 * k - 1, 2 * k] {
                assert!((spec[idx] - expect).abs() < 1e-9 * expect, "k={k}: {} vs {expect}", spec[idx]);
            }
        }
        assert!((poincare_constant(&g).unwrap() - r).abs() < 1e-9);
    }
}

#[test]
fn stiffness_is_symmetric_psd_with_constant_kernel() {
    let g = build_grid(&ellipse(2.0, 0.7), 40, 0.0).unwrap();
    let s = laplace_beltrami_matrix(&g);
    assert!(s.asymmetry() < 1e-12 * s.max_abs());
    let ones = vec![1.0; 40];
    assert!(s.matvec(&ones).iter().all(|x| x.abs() < 1e-10 * s.max_abs()));
    let eig = symmetric_eigen(&s);
    assert!(eig.values[0] > -1e-10);
    assert!(eig.values[1] > 1e-6, "kernel must be one-dimensional");
}

/// Strong form `-(1/sqrt g) d/dtheta (g^{-1/2} df/dtheta)` on an ellipse,
/// from closed-form derivatives.
#[test]
fn weak_laplacian_matches_strong_form_on_ellipse() {
    let (a, b) = (1.5, 0.8);
    let n = 128;
    let g = build_grid(&ellipse(a, b), n, 0.0).unwrap();
    let theta = g.nodes().theta().to_vec();
    let f: Vec<f64> = theta.iter().map(|&t| (2.0 * t).cos() + t.sin()).collect();
    let s = laplace_beltrami_matrix(&g);
    let m = mass_matrix(&g);
    let weak: Vec<f64> = s.matvec(&f).iter().zip(&m).map(|(x, w)| x / w).collect();
    for (j, &t) in theta.iter().enumerate() {
        let gg = a * a * t.sin().powi(2) + b * b * t.cos().powi(2);
        let dg = 2.0 * (a * a - b * b) * t.sin() * t.cos();
        let f1 = -2.0 * (2.0 * t).sin() + t.cos();
        let f2 = -4.0 * (2.0 * t).cos() - t.sin();
        let strong = -(f2 / gg - f1 * dg / (2.0 * gg * gg));
        assert!((weak[j] - strong).abs() < 1e-9, "node {j}: {} vs {strong}", weak[j]);
    }
}

#[test]
fn tangential_calculus_on_unit_circle() {
    let c = DilatingCircle::<f64>::fixed(1.0, 1.0).unwrap();
    let g = build_grid(&c, 32, 0.0).unwrap();
    let w: Vec<[f64; 2]> = g.position.iter().map(|x| [x[0] * x[0], x[0] * x[1]]).collect();
    let div = g.tangential_divergence(&w);
    for (d, t) in div.iter().zip(g.nodes().theta()) {
        assert!((d - t.cos()).abs() < 1e-12);
    }
    let constant = vec![[1.0, -2.0]; 32];
    assert!(g.tangential_divergence(&constant).iter().all(|d| d.abs() < 1e-12));
    let x1: Vec<f64> = g.position.iter().map(|x| x[0]).collect();
    let grad = g.tangential_gradient(&x1);
    for (gr, t) in grad.iter().zip(g.nodes().theta()) {
        assert!((gr[0] - t.sin().powi(2)).abs() < 1e-12);
        assert!((gr[1] + t.sin() * t.cos()).abs() < 1e-12);
    }
    // Identity map: divergence of x is 1 (curve dimension).
    let div_x = g.tangential_divergence(&g.position);
    assert!(div_x.iter().all(|d| (d - 1.0).abs() < 1e-12));
}

#[test]
fn material_derivative_of_squared_radius() {
    let c = DilatingCircle::<f64>::new(1.0, 1.0, DilationProfile::Linear, 1.0).unwrap();
    let nodes = PeriodicNodes::new(16);
    let f = |_t: f64, x: [f64; 2]| x[0] * x[0] + x[1] * x[1];
    let md = material_derivative(&c, &nodes, &f, 0.3);
    assert!(md.iter().all(|d| (d - 2.0 * 1.3).abs() < 1e-8));
}

#[test]
fn transport_formula_constant_on_dilating_circle() {
    let c = DilatingCircle::<f64>::new(1.0, 0.5, DilationProfile::Linear, 1.0).unwrap();
    let nodes = Arc::new(PeriodicNodes::new(64));
    let one = |_t: f64, _x: [f64; 2]| 1.0;
    let r = transport_residual(&c, &nodes, &one, 0.5, 1e-3).unwrap();
    assert!((r.lhs - PI).abs() < 1e-9 && (r.rhs - PI).abs() < 1e-9);
    assert!(!r.one_sided);
    let edge = transport_residual(&c, &nodes, &one, 0.0, 1e-3).unwrap();
    assert!(edge.one_sided && edge.residual < 1e-9);
}

#[test]
fn transport_formula_on_static_curve() {
    let c = ellipse(1.3, 0.6);
    let nodes = Arc::new(PeriodicNodes::new(32));
    let f = |_t: f64, x: [f64; 2]| (x[0] * 3.0).sin() + x[1];
    let r = transport_residual(&c, &nodes, &f, 0.5, 1e-2).unwrap();
    assert!(r.residual < 1e-10);
}

/// Central differences converge at second order for functions with genuine
/// time dependence on two moving families.
#[test]
fn transport_residual_converges_in_dt() {
    let circle: Arc<dyn MovingCurve<f64>> =
        Arc::new(DilatingCircle::<f64>::new(1.0, 0.8, DilationProfile::Exponential, 1.0).unwrap());
    let ell: Arc<dyn MovingCurve<f64>> = Arc::new(OscillatingEllipse::new(1.2, 0.8, 0.3, 2.0, 1.0).unwrap());
    let fields: Vec<Box<dyn Fn(f64, [f64; 2]) -> f64 + Sync>> = vec![
        Box::new(|t, x| (t * x[0]).exp() + x[1] * x[1]),
        Box::new(|t, x| x[0] * x[0] * (1.0 + t * t) - x[1]),
        Box::new(|t, x| (x[0] + t).sin() * (1.0 + x[1] * x[1])),
    ];
    let nodes = Arc::new(PeriodicNodes::new(64));
    for curve in [&circle, &ell] {
        for f in &fields {
            let errs: Vec<f64> = [0.1, 0.05, 0.025]
                .iter()
                .map(|&dt| transport_residual(curve.as_ref(), &nodes, f.as_ref(), 0.5, dt).unwrap().residual)
                .collect();
            for w in errs.windows(2) {
                let rate = (w[0] / w[1]).log2();
                assert!(rate >= 1.0, "{}: errors {errs:?}", curve.name());
            }
        }
    }
}

#[test]
fn poincare_inequality_holds_for_random_fields() {
    use rand::{Rng, SeedableRng};
    let g = build_grid(&ellipse(1.4, 0.9), 48, 0.0).unwrap();
    let c = poincare_constant(&g).unwrap();
    let s = laplace_beltrami_matrix(&g);
    let m = mass_matrix(&g);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let raw: Vec<f64> = (0..48).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean = dot(&raw, &m) / m.iter().sum::<f64>();
        let f: Vec<f64> = raw.iter().map(|x| x - mean).collect();
        let l2 = m.iter().zip(&f).map(|(w, x)| w * x * x).sum::<f64>().sqrt();
        let grad = s.bilinear(&f, &f).sqrt();
        assert!(l2 <= c * grad + 1e-9);
    }
}

#[test]
fn validation_catches_bad_families() {
    assert!(validate_curve(&ellipse(1.0, 0.5), 32, 5).is_ok());
    assert!(OscillatingEllipse::<f64>::new(1.0, 1.0, 1.2, 1.0, 1.0).is_err());
    assert!(DilatingCircle::<f64>::new(1.0, -2.0, DilationProfile::Linear, 1.0).is_err());
}

#[test]
fn custom_fourier_reproduces_dilating_circle() {
    let terms = vec![FourierTerm { k: 1, x_cos: [1.0, 0.5], x_sin: [0.0; 2], y_cos: [0.0; 2], y_sin: [1.0, 0.5] }];
    let fourier = CustomFourier::<f64>::new(terms, 1.0).unwrap();
    let circle = DilatingCircle::<f64>::new(1.0, 0.5, DilationProfile::Linear, 1.0).unwrap();
    let a = build_grid(&fourier, 16, 0.7).unwrap();
    let b = build_grid(&circle, 16, 0.7).unwrap();
    for j in 0..16 {
        assert!((a.sqrt_g[j] - b.sqrt_g[j]).abs() < 1e-14);
        assert!((a.velocity[j][1] - b.velocity[j][1]).abs() < 1e-14);
    }
    let sa = a.stiffness_weight_rates();
    let sb = b.stiffness_weight_rates();
    assert!(sa.iter().zip(&sb).all(|(x, y)| (x - y).abs() < 1e-14));
}

#[test]
fn single_precision_smoke() {
    let c = DilatingCircle::<f32>::fixed(1.0, 1.0).unwrap();
    let g = build_grid(&c, 32, 0.0).unwrap();
    let p = poincare_constant(&g).unwrap();
    assert!((p - 1.0).abs() < 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ellipse_invariants(a in 0.5f64..2.0, b in 0.5f64..2.0, amp in 0.0f64..0.5, t in 0.0f64..1.0) {
        let c = OscillatingEllipse::new(a, b, amp, 3.0, 1.0).unwrap();
        let g = build_grid(&c, 32, t).unwrap();
        let s = g.stiffness_matrix();
        prop_assert!(s.asymmetry() <= 1e-12 * s.max_abs());
        let ones = vec![1.0; 32];
        prop_assert!(s.matvec(&ones).iter().all(|x| x.abs() < 1e-10 * s.max_abs()));
        prop_assert!(g.g11.iter().all(|&x| x > 0.0));
        // Length equals the trapezoid sum of the speed, and converges
        // geometrically; aspect ratios up to 12 need ~128 nodes for 1e-8.
        let s_ = (3.0 * t).sin();
        let (ax, bx) = (a * (1.0 + amp * s_), b * (1.0 - amp * s_));
        let oracle: f64 = (0..32)
            .map(|j| {
                let th = 2.0 * std::f64::consts::PI * j as f64 / 32.0;
                (ax * ax * th.sin().powi(2) + bx * bx * th.cos().powi(2)).sqrt()
            })
            .sum::<f64>()
            * 2.0 * std::f64::consts::PI / 32.0;
        prop_assert!((g.length() - oracle).abs() < 1e-12 * oracle);
        let mid = build_grid(&c, 128, t).unwrap();
        let fine = build_grid(&c, 256, t).unwrap();
        prop_assert!((mid.length() - fine.length()).abs() < 1e-8 * fine.length());
        // Analytic weight rates agree with a time finite difference.
        let h = 1e-6;
        let (t0, t1) = if t + h <= 1.0 { (t, t + h) } else { (t - h, t) };
        let w0 = build_grid(&c, 32, t0).unwrap().stiffness_weights();
        let w1 = build_grid(&c, 32, t1).unwrap().stiffness_weights();
        let rates = build_grid(&c, 32, 0.5 * (t0 + t1)).unwrap().stiffness_weight_rates();
        for j in 0..32 {
            let fd = (w1[j] - w0[j]) / (t1 - t0);
            prop_assert!((fd - rates[j]).abs() < 1e-6);
        }
    }
}
