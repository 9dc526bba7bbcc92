use moving_spde::galerkin::*;
use moving_spde::geometry::*;
use moving_spde::linalg::{max_abs, sub, symmetric_eigen, Matrix};
use moving_spde::operators::*;
use moving_spde::spaces::*;
use moving_spde::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ellipse() -> OscillatingEllipse<f64> {
    OscillatingEllipse::new(1.3, 0.9, 0.2, 3.0, 1.0).unwrap()
}

fn dilation() -> DilatingCircle<f64> {
    DilatingCircle::new(1.0, 0.8, DilationProfile::Exponential, 1.0).unwrap()
}

fn static_circle() -> DilatingCircle<f64> {
    DilatingCircle::fixed(1.0, 1.0).unwrap()
}

fn heat(noise: NoiseModel<f64>) -> StefanModel<f64> {
    StefanModel::new(Nonlinearity::LinearHeat, noise).unwrap()
}

fn stefan(noise: NoiseModel<f64>) -> StefanModel<f64> {
    StefanModel::new(Nonlinearity::Stefan { a: 1.0, b: 1.0, rho: 1.0 }, noise).unwrap()
}

fn smooth_field(gram: &GramPath<f64>) -> Vec<f64> {
    let f: Vec<f64> = gram
        .nodes()
        .theta()
        .iter()
        .map(|&t| (t.cos() + 0.5 * (2.0 * t).sin()).exp() * (0.3 * t.cos()).cos())
        .collect();
    gram.project_zero_mean(&f)
}

#[test]
fn gram_schmidt_keeps_orthonormal_seed_at_reference_time() {
    let gram = GramPath::build(&ellipse(), 32, 4).unwrap();
    let seed = fourier_seed(&gram, 6).unwrap();
    let again = gram_schmidt(&gram, &seed, 0).unwrap();
    for (a, b) in seed.iter().zip(&again) {
        assert!(max_abs(&sub(a, b)) < 1e-12);
    }
    let basis = TimeBasis::build(&gram, seed.clone()).unwrap();
    for (a, b) in seed.iter().zip(&basis.basis_at(0)) {
        assert!(max_abs(&sub(a, b)) < 1e-12);
    }
}

#[test]
fn single_vector_is_normalized() {
    let gram = GramPath::build(&ellipse(), 32, 4).unwrap();
    let seed = fourier_seed(&gram, 1).unwrap();
    let basis = TimeBasis::build(&gram, seed.clone()).unwrap();
    for m in 0..=4 {
        let norm = gram.hminus_norm(m, &seed[0]).unwrap();
        let expect: Vec<f64> = seed[0].iter().map(|x| x / norm).collect();
        assert!(max_abs(&sub(&basis.basis_at(m)[0], &expect)) < 1e-12);
    }
}

#[test]
fn time_basis_is_orthonormal_and_triangular() {
    for curve in [&dilation() as &dyn MovingCurve<f64>, &ellipse()] {
        let gram = GramPath::build(curve, 32, 8).unwrap();
        let basis = TimeBasis::fourier(&gram, 4).unwrap();
        assert!(basis.orthonormality_defect(&gram).unwrap() < 1e-10);
        let basis = TimeBasis::fourier(&gram, 16).unwrap();
        assert!(basis.orthonormality_defect(&gram).unwrap() < 1e-9);
        for m in 0..=8 {
            let c = basis.coefficients(m);
            for i in 0..16 {
                for j in 0..i {
                    assert_eq!(c[(i, j)], 0.0);
                }
            }
        }
    }
}

#[test]
fn grid_and_coordinate_gram_schmidt_agree() {
    let gram = GramPath::build(&ellipse(), 32, 4).unwrap();
    let basis = TimeBasis::fourier(&gram, 6).unwrap();
    for m in [2, 4] {
        let direct = gram_schmidt(&gram, basis.seed(), m).unwrap();
        for (a, b) in direct.iter().zip(&basis.basis_at(m)) {
            assert!(max_abs(&sub(a, b)) < 1e-10);
        }
    }
}

#[test]
fn truncation_matches_fresh_build() {
    let gram = GramPath::build(&ellipse(), 32, 3).unwrap();
    let big = TimeBasis::fourier(&gram, 12).unwrap();
    let small = TimeBasis::fourier(&gram, 5).unwrap();
    let cut = big.truncate(5).unwrap();
    for m in 0..=3 {
        assert!(cut.gram_matrix(m).sub(small.gram_matrix(m)).max_abs() < 1e-13);
        assert!(cut.gram_rate(m).sub(small.gram_rate(m)).max_abs() < 1e-12);
        assert!(cut.coefficients(m).sub(small.coefficients(m)).max_abs() < 1e-11);
    }
}

#[test]
fn dependent_seed_is_rejected() {
    let gram = GramPath::build(&static_circle(), 16, 1).unwrap();
    let seed = fourier_seed(&gram, 2).unwrap();
    let dup = vec![seed[0].clone(), seed[1].clone(), seed[0].iter().map(|x| 2.0 * x).collect()];
    assert!(matches!(gram_schmidt(&gram, &dup, 1), Err(Error::RankDeficient { index: 2, .. })));
    assert!(fourier_seed(&gram, 9).is_err());
}

#[test]
fn projection_properties() {
    let gram = GramPath::build(&ellipse(), 32, 4).unwrap();
    let basis = TimeBasis::fourier(&gram, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for m in [0, 2, 4] {
        let e = basis.basis_at(m);
        let pe = projection_pn(&gram, &basis, m, &e[0]).unwrap();
        assert!(max_abs(&sub(&pe, &e[0])) < 1e-10);

        let u = random_zero_mean(&gram, &mut rng, Some(10));
        let pu = projection_pn(&gram, &basis, m, &u).unwrap();
        let ppu = projection_pn(&gram, &basis, m, &pu).unwrap();
        assert!(max_abs(&sub(&ppu, &pu)) < 1e-10 * max_abs(&pu));

        let best = gram.hminus_norm(m, &gram.project_zero_mean(&sub(&u, &pu))).unwrap();
        for _ in 0..20 {
            let w: Vec<f64> = (0..6).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
            let cand = basis.reconstruct(&w);
            let err = gram.hminus_norm(m, &gram.project_zero_mean(&sub(&u, &cand))).unwrap();
            assert!(best <= err + 1e-12);
        }

        // (P_n f, w)_t = <f, iota*_t w> for w in H_n.
        let w = basis.reconstruct(&[0.3, -1.0, 0.5, 0.0, 2.0, 1.0]);
        let lhs = gram.hminus_inner(m, &gram.project_zero_mean(&pu), &w).unwrap();
        let rhs = gram.inner0(&u, &gram.project_zero_mean(&gram.iota_star(m, &w).unwrap())).unwrap();
        assert!((lhs - rhs).abs() < 1e-9 * rhs.abs().max(1e-3));

        let via_functional = projection_functional(&gram, &basis, m, |v| gram.inner0(&u, v)).unwrap();
        assert!(max_abs(&sub(&via_functional, &pu)) < 1e-9 * max_abs(&pu));
    }
}

#[test]
fn drift_vanishes_at_zero_and_is_dissipative_for_heat() {
    let gram = GramPath::build(&dilation(), 32, 4).unwrap();
    let basis = TimeBasis::fourier(&gram, 6).unwrap();
    let model = stefan(NoiseModel::power_law(1.0, 1.5, 6, Coupling::LinearMultiplicative));
    let c = sde_coefficients(&gram, &basis, &model, 2, &[0.0; 6]).unwrap();
    assert!(c.drift.iter().all(|&a| a == 0.0));
    assert!(c.diffusion.iter().all(|&b| b == 0.0));

    let gram = GramPath::build(&static_circle(), 32, 2).unwrap();
    let basis = TimeBasis::fourier(&gram, 1).unwrap();
    let model = heat(NoiseModel::none());
    for x in [-2.0, 0.5, 3.0] {
        let a = sde_coefficients(&gram, &basis, &model, 1, &[x]).unwrap().drift[0];
        // cos t is an eigenfunction with eigenvalue 1 on the unit circle.
        assert!((a + x).abs() < 1e-12 * x.abs());
        assert!(a * x <= 0.0);
    }
}

#[test]
fn drift_coordinates_match_dual_pairing() {
    let gram = GramPath::build(&ellipse(), 32, 4).unwrap();
    let basis = TimeBasis::fourier(&gram, 8).unwrap();
    let model = StefanModel::new(Nonlinearity::PorousMedia { p: 3.0 }, NoiseModel::none()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for m in [1, 3] {
        for _ in 0..5 {
            let x: Vec<f64> = (0..8).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
            let y: Vec<f64> = (0..8).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
            let a = sde_coefficients(&gram, &basis, &model, m, &x).unwrap().drift;
            let lhs = basis.gram_matrix(m).bilinear(&a, &y);
            let big_a = drift(&gram, &model, m, &basis.reconstruct(&x)).unwrap();
            let rhs = gram.hminus_inner(m, &gram.project_zero_mean(&big_a), &basis.reconstruct(&y)).unwrap();
            assert!((lhs - rhs).abs() < 1e-9 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
        }
    }
}

#[test]
fn diffusion_coordinates_match_projected_noise_fields() {
    let gram = GramPath::build(&ellipse(), 32, 4).unwrap();
    let basis = TimeBasis::fourier(&gram, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for coupling in [Coupling::Additive, Coupling::LinearMultiplicative] {
        let model = stefan(NoiseModel::power_law(0.7, 1.5, 4, coupling));
        let x: Vec<f64> = (0..6).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let u = basis.reconstruct(&x);
        let c = sde_coefficients(&gram, &basis, &model, 3, &x).unwrap();
        let fields = noise_fields(&gram, basis.seed(), &model, 3, &u).unwrap();
        for (k, sigma) in fields.iter().enumerate() {
            let proj = projection_pn(&gram, &basis, 3, sigma).unwrap();
            let expect: Vec<f64> = basis.seed()[k].iter().map(|v| c.diffusion[k] * v).collect();
            assert!(max_abs(&sub(&proj, &expect)) < 1e-10 * max_abs(&expect).max(1e-12));
        }
        assert!(c.diffusion[4..].iter().all(|&b| b == 0.0));
        let bm = c.diffusion_matrix();
        assert!((bm[(0, 0)] - c.diffusion[0]).abs() == 0.0 && bm[(0, 1)] == 0.0);
    }
}

#[test]
fn zero_state_without_noise_stays_put() {
    let gram = GramPath::build(&ellipse(), 16, 20).unwrap();
    let basis = TimeBasis::fourier(&gram, 4).unwrap();
    let path = simulate_path(&gram, &basis, &stefan(NoiseModel::none()), &[0.0; 4], 1).unwrap();
    assert!(path.coords.iter().all(|x| x.iter().all(|&v| v == 0.0)));
}

#[test]
fn deterministic_heat_path_matches_matrix_exponential() {
    let curve = DilatingCircle::fixed(1.0, 0.5).unwrap();
    let model = heat(NoiseModel::none());
    let x0 = [1.0, -0.5, 0.4, 0.2, -0.3, 0.1];
    let mut errs = Vec::new();
    for steps in [40, 80, 160] {
        let gram = GramPath::build(&curve, 32, steps).unwrap();
        let basis = TimeBasis::fourier(&gram, 6).unwrap();
        // x' = -K x with K_ij = int phi_i phi_j on the static circle (G = I).
        let seed = basis.seed();
        let k = Matrix::from_fn(6, 6, |i, j| {
            -seed[i].iter().zip(&seed[j]).zip(gram.mass0()).map(|((a, b), w)| a * b * w).sum::<f64>()
        });
        let eig = symmetric_eigen(&k);
        let exact: Vec<f64> = {
            let c = eig.vectors.tr_matvec(&x0);
            let scaled: Vec<f64> = c.iter().zip(&eig.values).map(|(ci, l)| ci * (l * 0.5).exp()).collect();
            eig.vectors.matvec(&scaled)
        };
        let path = simulate_path(&gram, &basis, &model, &x0, 3).unwrap();
        errs.push(max_abs(&sub(path.coords.last().unwrap(), &exact)));
    }
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.7..2.3).contains(&ratio), "{errs:?}");
    }
}

#[test]
fn same_seed_gives_identical_paths() {
    let gram = GramPath::build(&ellipse(), 16, 20).unwrap();
    let basis = TimeBasis::fourier(&gram, 6).unwrap();
    let model = stefan(NoiseModel::power_law(0.5, 1.5, 6, Coupling::LinearMultiplicative));
    let x0 = basis.coordinates0(&gram, &smooth_field(&gram)).unwrap();
    let a = simulate_path(&gram, &basis, &model, &x0, 99).unwrap();
    let b = simulate_path(&gram, &basis, &model, &x0, 99).unwrap();
    assert_eq!(a, b);
    let c = simulate_path(&gram, &basis, &model, &x0, 100).unwrap();
    assert_ne!(a, c);
    assert!(a.zero_mean_defect(&gram, &basis) < 1e-9);
}

#[test]
fn increments_are_reproducible_and_coarsen_by_pairs() {
    let steps = vec![0.01; 8];
    let big: Vec<Vec<f64>> = brownian_increments(4, 6, &steps);
    assert_eq!(big, brownian_increments(4, 6, &steps));
    assert_ne!(big, brownian_increments(5, 6, &steps));
    let var = big.iter().flatten().map(|v| v * v).sum::<f64>() / 48.0;
    assert!(var > 0.002 && var < 0.03);
    let coarse = coarsen(&big).unwrap();
    assert_eq!(coarse.len(), 4);
    assert!((coarse[1][2] - big[2][2] - big[3][2]).abs() < 1e-16);
    assert!(coarsen(&big[..3]).is_err());
}

#[test]
fn euler_maruyama_strong_order_on_linear_model() {
    // Reference: the same scheme on a 16x finer grid, driven by the same
    // Brownian path.
    let curve = DilatingCircle::fixed(1.0, 0.5).unwrap();
    let model = heat(NoiseModel::power_law(0.5, 1.5, 4, Coupling::Additive));
    let n = 4;
    let fine_steps = 256;
    let fine = GramPath::build(&curve, 16, fine_steps).unwrap();
    let fine_basis = TimeBasis::fourier(&fine, n).unwrap();
    let levels: Vec<(GramPath<f64>, TimeBasis<f64>)> = [16, 32, 64]
        .iter()
        .map(|&s| {
            let g = GramPath::build(&curve, 16, s).unwrap();
            let b = TimeBasis::fourier(&g, n).unwrap();
            (g, b)
        })
        .collect();
    let x0 = [1.0, 0.5, -0.5, 0.25];
    let dts = vec![0.5 / fine_steps as f64; fine_steps];
    let mut errs = vec![0.0; 3];
    let paths = 500;
    for i in 0..paths {
        let inc = brownian_increments(path_seed(17, i), n, &dts);
        let reference = simulate_with_increments(&fine, &fine_basis, &model, &x0, &inc, 0).unwrap();
        let target = reference.coords.last().unwrap();
        let mut c = inc.clone();
        let mut per_level = Vec::new();
        while c.len() > 16 {
            c = coarsen(&c).unwrap();
            per_level.push(c.clone());
        }
        for (j, (g, b)) in levels.iter().enumerate() {
            let incs = per_level.iter().find(|v| v.len() == g.steps()).unwrap();
            let p = simulate_with_increments(g, b, &model, &x0, incs, 0).unwrap();
            let d = sub(p.coords.last().unwrap(), target);
            errs[j] += d.iter().map(|v| v * v).sum::<f64>() / paths as f64;
        }
    }
    let errs: Vec<f64> = errs.iter().map(|e| e.sqrt()).collect();
    for w in errs.windows(2) {
        assert!((w[0] / w[1]).log2() >= 0.5, "{errs:?}");
    }
}

#[test]
fn moments_vanish_for_trivial_dynamics_and_scale_with_ensemble() {
    let gram = GramPath::build(&dilation(), 16, 16).unwrap();
    let basis = TimeBasis::fourier(&gram, 4).unwrap();
    let model = stefan(NoiseModel::none());
    let ens = simulate_ensemble(&gram, &basis, &model, &[0.0; 4], 1, 20).unwrap();
    let m = moment_estimate(&ens, &gram, &basis, &model, 2.0);
    assert_eq!(m.sup_estimate, 0.0);
    assert_eq!(m.integral_estimate, 0.0);

    let model = stefan(NoiseModel::power_law(1.0, 1.5, 4, Coupling::Additive));
    let x0 = basis.coordinates0(&gram, &smooth_field(&gram)).unwrap();
    let small = simulate_ensemble(&gram, &basis, &model, &x0, 7, 200).unwrap();
    let large = simulate_ensemble(&gram, &basis, &model, &x0, 7, 800).unwrap();
    let a = moment_estimate(&small, &gram, &basis, &model, 2.0);
    let b = moment_estimate(&large, &gram, &basis, &model, 2.0);
    assert_eq!(a.failed + b.failed, 0);
    let ratio = b.sup_stderr / a.sup_stderr;
    assert!((0.35..0.65).contains(&ratio), "stderr ratio {ratio}");
    let gap = (a.sup_estimate - b.sup_estimate).abs();
    assert!(gap < 3.0 * (a.sup_stderr.powi(2) + b.sup_stderr.powi(2)).sqrt());
}

#[test]
fn convergence_for_heat_and_exact_span() {
    let curve = DilatingCircle::fixed(1.0, 0.25).unwrap();
    let gram = GramPath::build(&curve, 64, 64).unwrap();
    let basis = TimeBasis::fourier(&gram, 32).unwrap();
    let model = heat(NoiseModel::none());
    let u0 = smooth_field(&gram);
    let table = galerkin_convergence(&gram, &basis, &model, &[2, 4, 8], &u0, 3, 2).unwrap();
    assert!(table.strictly_decreasing(), "{table:?}");
    for w in table.rows.windows(2) {
        assert!(w[0].distance >= 2.0 * w[1].distance, "{table:?}");
        assert!(w[1].distance >= 0.0);
    }

    // Band-limited data inside every level: the levels agree exactly.
    let theta = gram.nodes().theta();
    let band = gram.project_zero_mean(&theta.iter().map(|&t| t.cos() - 0.5 * t.sin()).collect::<Vec<_>>());
    let table = galerkin_convergence(&gram, &basis, &model, &[2, 4], &band, 3, 2).unwrap();
    assert!(table.rows.iter().all(|r| r.distance < 1e-12), "{table:?}");
}

#[test]
fn pipelines_agree_bitwise() {
    let model = stefan(NoiseModel::power_law(0.5, 1.5, 6, Coupling::LinearMultiplicative));
    let gram = GramPath::build(&ellipse(), 16, 10).unwrap();
    let u0 = smooth_field(&gram);
    let dev = pathwise_uniqueness_check(&ellipse(), 16, 10, 6, &model, &u0, 5).unwrap();
    assert!(dev <= 1e-12);
}

#[test]
fn blow_up_is_reported_with_step() {
    // Explicit stepping far beyond the stability limit of the heat drift.
    let curve = DilatingCircle::fixed(1.0, 50.0).unwrap();
    let gram = GramPath::build(&curve, 32, 10).unwrap();
    let basis = TimeBasis::fourier(&gram, 16).unwrap();
    let x0 = vec![1.0; 16];
    let err = simulate_path(&gram, &basis, &heat(NoiseModel::none()), &x0, 0).unwrap_err();
    assert!(matches!(err, Error::BlowUp { step, .. } if step >= 1 && step <= 10));
    let ens = simulate_ensemble(&gram, &basis, &heat(NoiseModel::none()), &x0, 0, 3).unwrap();
    assert_eq!((ens.paths.len(), ens.failed), (0, 3));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn paths_preserve_zero_mean(seed in 0u64..1000, gamma in 0.1f64..2.0) {
        let gram = GramPath::build(&ellipse(), 16, 12).unwrap();
        let basis = TimeBasis::fourier(&gram, 6).unwrap();
        let model = stefan(NoiseModel::power_law(gamma, 1.5, 6, Coupling::Additive));
        let x0 = basis.coordinates0(&gram, &smooth_field(&gram)).unwrap();
        let p = simulate_path(&gram, &basis, &model, &x0, seed).unwrap();
        prop_assert!(p.zero_mean_defect(&gram, &basis) < 1e-9);
        prop_assert!(p.coords.iter().flatten().all(|v| v.is_finite()));
    }
}
