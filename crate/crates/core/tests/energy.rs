use moving_spde::energy::*;
use moving_spde::galerkin::*;
use moving_spde::geometry::*;
use moving_spde::operators::*;
use moving_spde::spaces::*;

fn ellipse() -> OscillatingEllipse<f64> {
    OscillatingEllipse::new(1.3, 0.9, 0.2, 3.0, 1.0).unwrap()
}

fn dilation() -> DilatingCircle<f64> {
    DilatingCircle::new(1.0, 0.8, DilationProfile::Exponential, 1.0).unwrap()
}

fn model(law: Nonlinearity<f64>, noise: NoiseModel<f64>) -> StefanModel<f64> {
    StefanModel::new(law, noise).unwrap()
}

const STEFAN: Nonlinearity<f64> = Nonlinearity::Stefan { a: 1.0, b: 1.0, rho: 1.0 };

fn smooth_coords(gram: &GramPath<f64>, basis: &TimeBasis<f64>, scale: f64) -> Vec<f64> {
    let f: Vec<f64> = gram.nodes().theta().iter().map(|&t| scale * ((t.cos()).exp() + 0.7 * (2.0 * t).sin())).collect();
    basis.coordinates0(gram, &gram.project_zero_mean(&f)).unwrap()
}

#[test]
fn static_drift_free_path_has_zero_residual() {
    let curve = DilatingCircle::fixed(1.0, 1.0).unwrap();
    let gram = GramPath::build(&curve, 32, 20).unwrap();
    let basis = TimeBasis::fourier(&gram, 6).unwrap();
    let m = model(Nonlinearity::Zero, NoiseModel::none());
    let path = simulate_path(&gram, &basis, &m, &smooth_coords(&gram, &basis, 1.0), 1).unwrap();
    let ledger = ito_residual(&path, &gram, &basis, &m).unwrap();
    assert!(ledger.max_abs_residual() < 1e-12);
    assert_eq!(ledger.residual[0], 0.0);
    assert_eq!(ledger.drift_term[0], 0.0);
}

#[test]
fn drift_free_moving_path_is_second_order() {
    let m = model(Nonlinearity::Zero, NoiseModel::none());
    for curve in [&dilation() as &dyn MovingCurve<f64>, &ellipse()] {
        let mut res = Vec::new();
        for steps in [20, 40, 80] {
            let gram = GramPath::build(curve, 32, steps).unwrap();
            let basis = TimeBasis::fourier(&gram, 6).unwrap();
            let path = simulate_path(&gram, &basis, &m, &smooth_coords(&gram, &basis, 1.0), 1).unwrap();
            res.push(ito_residual(&path, &gram, &basis, &m).unwrap().final_residual().abs());
        }
        for w in res.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..=4.5).contains(&ratio), "{}: {res:?}", curve.name());
        }
    }
}

fn coupled_residuals(
    curve: &dyn MovingCurve<f64>,
    m: &StefanModel<f64>,
    n: usize,
    fine_steps: usize,
    paths: u64,
    transport: bool,
) -> (f64, f64) {
    let fine = GramPath::build(curve, 32, fine_steps).unwrap();
    let coarse = GramPath::build(curve, 32, fine_steps / 2).unwrap();
    let fb = TimeBasis::fourier(&fine, n).unwrap();
    let cb = TimeBasis::fourier(&coarse, n).unwrap();
    let x0 = smooth_coords(&fine, &fb, 0.5);
    let dts: Vec<f64> = (0..fine_steps).map(|k| fine.step(k)).collect();
    let (mut a, mut b) = (0.0, 0.0);
    for i in 0..paths {
        let inc = brownian_increments(path_seed(3, i), n, &dts);
        let pf = simulate_with_increments(&fine, &fb, m, &x0, &inc, 0).unwrap();
        let pc = simulate_with_increments(&coarse, &cb, m, &x0, &coarsen(&inc).unwrap(), 0).unwrap();
        let (rf, rc) = if transport {
            (
                stochastic_transport_residual(&pf, &fine, &fb, m).unwrap().final_residual(),
                stochastic_transport_residual(&pc, &coarse, &cb, m).unwrap().final_residual(),
            )
        } else {
            (
                ito_residual(&pf, &fine, &fb, m).unwrap().final_residual(),
                ito_residual(&pc, &coarse, &cb, m).unwrap().final_residual(),
            )
        };
        a += rc.abs() / paths as f64;
        b += rf.abs() / paths as f64;
    }
    (a, b)
}

#[test]
fn full_model_residual_is_first_order() {
    let m = model(STEFAN, NoiseModel::power_law(0.5, 1.5, 8, Coupling::LinearMultiplicative));
    let (coarse, fine) = coupled_residuals(&dilation(), &m, 8, 128, 200, false);
    let ratio = coarse / fine;
    assert!((1.6..=2.6).contains(&ratio), "ratio {ratio}");
}

#[test]
fn martingale_term_has_zero_mean() {
    let gram = GramPath::build(&ellipse(), 16, 32).unwrap();
    let basis = TimeBasis::fourier(&gram, 6).unwrap();
    let m = model(STEFAN, NoiseModel::power_law(0.8, 1.5, 6, Coupling::Additive));
    let x0 = smooth_coords(&gram, &basis, 0.5);
    let ens = simulate_ensemble(&gram, &basis, &m, &x0, 11, 500).unwrap();
    let finals: Vec<f64> = ens
        .paths
        .iter()
        .map(|p| *ito_residual(p, &gram, &basis, &m).unwrap().martingale_term.last().unwrap())
        .collect();
    let (mean, se) = mean_stderr(&finals);
    assert!(mean.abs() < 3.0 * se, "{mean} +- {se}");
}

#[test]
fn gronwall_functional_cases() {
    let gram = GramPath::build(&ellipse(), 32, 40).unwrap();
    let basis = TimeBasis::fourier(&gram, 8).unwrap();
    let stefan_quiet = model(STEFAN, NoiseModel::none());
    let x0 = smooth_coords(&gram, &basis, 1.0);
    let y0: Vec<f64> = x0.iter().enumerate().map(|(k, v)| v + 0.3 / (k + 1) as f64).collect();
    let w = GronwallWeights::new(&gram, &basis, 0.0);
    assert!(w.c1_squared >= 1.0);

    let x = simulate_path(&gram, &basis, &stefan_quiet, &x0, 1).unwrap();
    let same = gronwall_functional(&x, &x, &basis, &w).unwrap();
    assert!(same.iter().all(|&v| v == 0.0));

    let y = simulate_path(&gram, &basis, &stefan_quiet, &y0, 1).unwrap();
    let g = gronwall_functional(&x, &y, &basis, &w).unwrap();
    assert!(g.iter().all(|&v| v <= g[0] * (1.0 + 1e-12)), "{g:?}");

    // Static geometry, linear heat: exact contraction.
    let curve = FrozenCurve::new(std::sync::Arc::new(ellipse()), 0.3);
    let gram = GramPath::build(&curve, 32, 40).unwrap();
    let basis = TimeBasis::fourier(&gram, 8).unwrap();
    let heat = model(Nonlinearity::LinearHeat, NoiseModel::none());
    let w = GronwallWeights::new(&gram, &basis, 0.0);
    assert!(w.exponent.iter().all(|&e| e == 0.0));
    let x = simulate_path(&gram, &basis, &heat, &x0, 1).unwrap();
    let y = simulate_path(&gram, &basis, &heat, &y0, 1).unwrap();
    let g = gronwall_functional(&x, &y, &basis, &w).unwrap();
    assert!(g.windows(2).all(|p| p[1] <= p[0]), "{g:?}");
}

#[test]
fn gronwall_mean_non_increasing_with_multiplicative_noise() {
    let gram = GramPath::build(&dilation(), 16, 32).unwrap();
    let basis = TimeBasis::fourier(&gram, 6).unwrap();
    let noise = NoiseModel::power_law(0.6, 1.5, 6, Coupling::LinearMultiplicative);
    let m = model(STEFAN, noise.clone());
    let w = GronwallWeights::new(&gram, &basis, noise.f_bound);
    let x0 = smooth_coords(&gram, &basis, 1.0);
    let y0: Vec<f64> = x0.iter().map(|v| 0.5 * v).collect();
    let paths = 500;
    let samples: Vec<Vec<f64>> = (0..paths)
        .map(|i| {
            let seed = path_seed(8, i);
            let x = simulate_path(&gram, &basis, &m, &x0, seed).unwrap();
            let y = simulate_path(&gram, &basis, &m, &y0, seed).unwrap();
            gronwall_functional(&x, &y, &basis, &w).unwrap()
        })
        .collect();
    let stats: Vec<(f64, f64)> =
        (0..=32).map(|k| mean_stderr(&samples.iter().map(|s| s[k]).collect::<Vec<_>>())).collect();
    for p in stats.windows(2) {
        let (a, sa) = p[0];
        let (b, sb) = p[1];
        assert!(b <= a + 3.0 * (sa * sa + sb * sb).sqrt(), "{stats:?}");
    }
}

#[test]
fn deformation_tensor_of_linear_velocity() {
    for alpha in [0.5f64, -1.2] {
        let curve = DilatingCircle::new(1.0, alpha, DilationProfile::Linear, 0.5).unwrap();
        let grid = build_grid(&curve, 64, 0.0).unwrap();
        let b = deformation_tensor(&grid);
        for (bk, nu) in b.iter().zip(grid.unit_normal()) {
            for i in 0..2 {
                for j in 0..2 {
                    let expect: f64 = alpha * (2.0 * nu[i] * nu[j] - if i == j { 1.0 } else { 0.0 });
                    assert!((bk[i][j] - expect).abs() < 1e-9);
                }
            }
            assert_eq!(bk[0][1], bk[1][0]);
        }
    }
    let still = build_grid(&DilatingCircle::fixed(1.0, 1.0).unwrap(), 32, 0.2).unwrap();
    assert!(deformation_tensor(&still).iter().flatten().flatten().all(|&v| v == 0.0));
}

#[test]
fn deformation_term_equals_phi_form_along_paths() {
    let m = model(STEFAN, NoiseModel::power_law(0.5, 1.5, 8, Coupling::Additive));
    for curve in [&dilation() as &dyn MovingCurve<f64>, &ellipse()] {
        let gram = GramPath::build(curve, 64, 20).unwrap();
        let basis = TimeBasis::fourier(&gram, 8).unwrap();
        let x0 = smooth_coords(&gram, &basis, 1.0);
        for seed in 0..4 {
            let p = simulate_path(&gram, &basis, &m, &x0, seed).unwrap();
            let ledger = stochastic_transport_residual(&p, &gram, &basis, &m).unwrap();
            let worst = ledger.deformation_mismatch.iter().fold(0.0f64, |a, &b| a.max(b));
            assert!(worst < 1e-8, "{}: {worst}", curve.name());
        }
    }
}

#[test]
fn static_transport_balance_is_first_order() {
    let curve = FrozenCurve::new(std::sync::Arc::new(ellipse()), 0.0);
    let heat = model(Nonlinearity::LinearHeat, NoiseModel::none());
    let mut res = Vec::new();
    for steps in [40, 80, 160] {
        let gram = GramPath::build(&curve, 32, steps).unwrap();
        let basis = TimeBasis::fourier(&gram, 8).unwrap();
        let p = simulate_path(&gram, &basis, &heat, &smooth_coords(&gram, &basis, 1.0), 0).unwrap();
        let ledger = stochastic_transport_residual(&p, &gram, &basis, &heat).unwrap();
        assert!(ledger.deformation.iter().all(|&d| d.abs() < 1e-12));
        res.push(ledger.final_residual().abs());
    }
    for w in res.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.7..=2.3).contains(&ratio), "{res:?}");
    }
}

#[test]
fn transport_balance_residual_halves_for_full_model() {
    let m = model(STEFAN, NoiseModel::power_law(0.5, 1.5, 8, Coupling::LinearMultiplicative));
    let (coarse, fine) = coupled_residuals(&ellipse(), &m, 8, 128, 100, true);
    let ratio = coarse / fine;
    assert!((1.6..=2.6).contains(&ratio), "ratio {ratio}");
}

#[test]
fn transport_and_ito_ledgers_agree_term_by_term() {
    let m = model(STEFAN, NoiseModel::power_law(0.5, 1.5, 6, Coupling::LinearMultiplicative));
    let gram = GramPath::build(&ellipse(), 32, 24).unwrap();
    let basis = TimeBasis::fourier(&gram, 6).unwrap();
    let p = simulate_path(&gram, &basis, &m, &smooth_coords(&gram, &basis, 0.7), 4).unwrap();
    let ito = ito_residual(&p, &gram, &basis, &m).unwrap();
    let tr = stochastic_transport_residual(&p, &gram, &basis, &m).unwrap();
    for k in 0..=24 {
        let scale = ito.lhs[k].abs().max(1e-3);
        assert!((ito.lhs[k] - tr.energy[k]).abs() < 1e-9 * scale);
        assert!((ito.drift_term[k] - tr.dissipation[k]).abs() < 1e-9 * scale);
        assert!((ito.ito_correction[k] - tr.noise_variation[k]).abs() < 1e-9 * scale);
        assert!((ito.martingale_term[k] - tr.stochastic_integral[k]).abs() < 1e-9 * scale);
        assert!((ito.phi_term[k] - tr.deformation[k]).abs() < 1e-8 * scale);
    }
}

#[test]
fn refinement_study_matches_hand_coupling() {
    let m = model(STEFAN, NoiseModel::power_law(0.5, 1.5, 6, Coupling::LinearMultiplicative));
    let curve = ellipse();
    let (coarse_ref, fine_ref) = coupled_residuals(&curve, &m, 6, 32, 12, false);
    let fg = GramPath::build(&curve, 32, 32).unwrap();
    let cg = GramPath::build(&curve, 32, 16).unwrap();
    let fb = TimeBasis::fourier(&fg, 6).unwrap();
    let cb = TimeBasis::fourier(&cg, 6).unwrap();
    let x0 = smooth_coords(&fg, &fb, 0.5);
    let s = refinement_study((&cg, &cb), (&fg, &fb), &m, &x0, Balance::Ito, 3, 12).unwrap();
    assert!((s.coarse_mean - coarse_ref).abs() < 1e-12 * coarse_ref);
    assert!((s.fine_mean - fine_ref).abs() < 1e-12 * fine_ref);
    assert_eq!((s.paths, s.failed), (12, 0));
    assert!(refinement_study((&cg, &cb), (&cg, &cb), &m, &x0, Balance::Ito, 3, 2).is_err());
}
