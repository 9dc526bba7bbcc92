//! Energy bookkeeping along Galerkin paths: the Ito formula for `|X_t|_t^2`,
//! the discounted gap used for pathwise uniqueness, and the energy balance
//! written on the moving curve with the deformation tensor.

use crate::error::{Error, Result};
use crate::galerkin::{sde_coefficients, PathState, TimeBasis};
use crate::geometry::SurfaceGrid;
use crate::linalg::symmetric_eigen;
use crate::operators::StefanModel;
use crate::scalar::{lit, to_f64, Real};
use crate::spaces::GramPath;
use serde::Serialize;

/// Cumulative terms of
/// `|X_t|_t^2 = |X_0|^2 + int 2<A, iota* X> + |B|^2 ds + int (X, Phi X) ds + 2 int (X, B dW)_s`
/// along a discrete path. Entry `m` covers `[0, t_m]`.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyLedger {
    pub times: Vec<f64>,
    /// `|X_{t_m}|_{t_m}^2`
    pub lhs: Vec<f64>,
    pub drift_term: Vec<f64>,
    /// Realized quadratic variation `sum (b dB)^T G (b dB)`.
    pub ito_correction: Vec<f64>,
    /// Lebesgue form `sum_k |b_k|_t^2 dt` of the same correction.
    pub ito_correction_lebesgue: Vec<f64>,
    pub phi_term: Vec<f64>,
    pub martingale_term: Vec<f64>,
    /// `lhs - lhs_0 - (drift + ito + phi + martingale)`.
    pub residual: Vec<f64>,
}

impl EnergyLedger {
    pub fn final_residual(&self) -> f64 {
        *self.residual.last().unwrap_or(&0.0)
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.residual.iter().fold(0.0, |a, r| a.max(r.abs()))
    }
}

fn check_path<T: Real>(path: &PathState<T>, gram: &GramPath<T>, basis: &TimeBasis<T>) -> Result<()> {
    if path.coords.len() != gram.len() || basis.nodes() != gram.len() {
        return Err(Error::Dimension { expected: gram.len(), got: path.coords.len() });
    }
    if path.n() != basis.n() {
        return Err(Error::Dimension { expected: basis.n(), got: path.n() });
    }
    Ok(())
}

/// Re-evaluates every term of the Ito formula on a stored path with its own
/// increments (left-point stochastic integrals, trapezoid rule for the
/// `Phi` term at the step's end state).
pub fn ito_residual<T: Real>(
    path: &PathState<T>,
    gram: &GramPath<T>,
    basis: &TimeBasis<T>,
    model: &StefanModel<T>,
) -> Result<EnergyLedger> {
    check_path(path, gram, basis)?;
    let two = lit::<T>(2.0);
    let half = lit::<T>(0.5);
    let steps = path.steps();
    let n = basis.n();
    let lhs: Vec<T> = (0..=steps).map(|m| basis.gram_matrix(m).bilinear(&path.coords[m], &path.coords[m])).collect();
    let (mut drift, mut ito, mut leb, mut phi, mut mart) = (T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
    let mut rows = vec![[T::zero(); 5]];
    for m in 0..steps {
        let x = &path.coords[m];
        let x1 = &path.coords[m + 1];
        let g = basis.gram_matrix(m);
        let dt = gram.step(m);
        let c = sde_coefficients(gram, basis, model, m, x)?;
        let bdb: Vec<T> = (0..n).map(|k| c.diffusion[k] * path.increments[m][k]).collect();
        drift = drift + two * g.bilinear(x, &c.drift) * dt;
        ito = ito + g.bilinear(&bdb, &bdb);
        leb = leb + (0..n).map(|k| c.diffusion[k] * c.diffusion[k] * g[(k, k)]).sum::<T>() * dt;
        phi = phi + half * dt * (basis.gram_rate(m).bilinear(x1, x1) + basis.gram_rate(m + 1).bilinear(x1, x1));
        mart = mart + two * g.bilinear(x, &bdb);
        rows.push([drift, ito, leb, phi, mart]);
    }
    let col = |k: usize| rows.iter().map(|r| to_f64(r[k])).collect::<Vec<_>>();
    let residual = (0..=steps)
        .map(|m| {
            let r = &rows[m];
            to_f64(lhs[m] - lhs[0] - (r[0] + r[1] + r[3] + r[4]))
        })
        .collect();
    Ok(EnergyLedger {
        times: gram.times().into_iter().map(to_f64).collect(),
        lhs: lhs.into_iter().map(to_f64).collect(),
        drift_term: col(0),
        ito_correction: col(1),
        ito_correction_lebesgue: col(2),
        phi_term: col(3),
        martingale_term: col(4),
        residual,
    })
}

/// Discount data for `e^{-Psi(t)} |X_t - Y_t|_t^2` with
/// `Psi(t) = int_0^t (f + c1^2 ||Phi(s)||) ds`, measured on the Galerkin span.
#[derive(Debug, Clone, Serialize)]
pub struct GronwallWeights {
    /// `max_m max(lambda_max(G_m), 1 / lambda_min(G_m))`
    pub c1_squared: f64,
    /// `||Phi(t_m)||` restricted to the span (spectral radius of `G'`).
    pub phi_norms: Vec<f64>,
    /// `Psi(t_m)`
    pub exponent: Vec<f64>,
}

impl GronwallWeights {
    pub fn new<T: Real>(gram: &GramPath<T>, basis: &TimeBasis<T>, f: T) -> Self {
        let mut c1_sq = T::one();
        let mut norms = Vec::with_capacity(gram.len());
        for m in 0..gram.len() {
            let e = symmetric_eigen(basis.gram_matrix(m));
            let lo = e.values.first().copied().unwrap_or(T::one());
            let hi = e.values.last().copied().unwrap_or(T::one());
            c1_sq = c1_sq.max(hi).max(T::one() / lo);
            let r = symmetric_eigen(basis.gram_rate(m)).values.iter().fold(T::zero(), |a, v| a.max(v.abs()));
            norms.push(r);
        }
        let mut exponent = vec![T::zero()];
        for m in 0..gram.steps() {
            let rate = f + c1_sq * norms[m].max(norms[m + 1]);
            exponent.push(exponent[m] + rate * gram.step(m));
        }
        Self {
            c1_squared: to_f64(c1_sq),
            phi_norms: norms.into_iter().map(to_f64).collect(),
            exponent: exponent.into_iter().map(to_f64).collect(),
        }
    }
}

/// `e^{-Psi(t_m)} |X_{t_m} - Y_{t_m}|_{t_m}^2` for two coupled paths.
pub fn gronwall_functional<T: Real>(
    x: &PathState<T>,
    y: &PathState<T>,
    basis: &TimeBasis<T>,
    weights: &GronwallWeights,
) -> Result<Vec<f64>> {
    if x.coords.len() != y.coords.len() || x.n() != y.n() || weights.exponent.len() != x.coords.len() {
        return Err(Error::Dimension { expected: x.coords.len(), got: y.coords.len() });
    }
    Ok((0..x.coords.len())
        .map(|m| {
            let d: Vec<T> = x.coords[m].iter().zip(&y.coords[m]).map(|(&a, &b)| a - b).collect();
            (-weights.exponent[m]).exp() * to_f64(basis.gram_matrix(m).bilinear(&d, &d))
        })
        .collect())
}

/// Per-node `B = (div_Gamma v) I - 2 D`, `D = sym(grad_Gamma v)`, from
/// spectral tangential derivatives of the sampled velocity.
pub fn deformation_tensor<T: Real>(grid: &SurfaceGrid<T>) -> Vec<[[T; 2]; 2]> {
    let vx: Vec<T> = grid.velocity.iter().map(|v| v[0]).collect();
    let vy: Vec<T> = grid.velocity.iter().map(|v| v[1]).collect();
    // grad[j][i] = (grad_Gamma)_i v_j
    let gx = grid.tangential_gradient(&vx);
    let gy = grid.tangential_gradient(&vy);
    (0..grid.len())
        .map(|k| {
            let grad = [gx[k], gy[k]];
            let div = grad[0][0] + grad[1][1];
            let mut b = [[T::zero(); 2]; 2];
            for (i, row) in b.iter_mut().enumerate() {
                for (j, e) in row.iter_mut().enumerate() {
                    let d = grad[j][i] + grad[i][j];
                    *e = if i == j { div - d } else { -d };
                }
            }
            b
        })
        .collect()
}

/// `int_{Gamma_s} B grad w . grad w` for a nodal function `w` on the grid.
pub fn deformation_energy<T: Real>(grid: &SurfaceGrid<T>, w: &[T]) -> T {
    let b = deformation_tensor(grid);
    let gw = grid.tangential_gradient(w);
    let density: Vec<T> = b
        .iter()
        .zip(&gw)
        .map(|(b, g)| {
            let bg = [b[0][0] * g[0] + b[0][1] * g[1], b[1][0] * g[0] + b[1][1] * g[1]];
            bg[0] * g[0] + bg[1] * g[1]
        })
        .collect();
    grid.surface_integral(&density)
}

/// Energy contribution of the surface motion, `-int_{Gamma_s} B grad w . grad w`
/// with `w = (-Delta_{Gamma_s})^{-1} X` obtained through the reference solve.
pub fn deformation_term<T: Real>(gram: &GramPath<T>, m: usize, u: &[T]) -> Result<T> {
    let w = gram.riesz_solve(m, u)?;
    Ok(-deformation_energy(gram.grid(m)?, &w))
}

/// Terms of the energy balance on the moving curve,
/// `|X_t|^2 = |X_0|^2 - 2 int int_{Gamma_s} Psi(X) X + QV + 2 int (X, dM)
/// - int int_{Gamma_s} B grad w . grad w`, cumulative per node.
#[derive(Debug, Clone, Serialize)]
pub struct TransportLedger {
    pub times: Vec<f64>,
    /// `|X_{t_m}|^2` in the negative Sobolev norm of `Gamma_{t_m}`.
    pub energy: Vec<f64>,
    pub dissipation: Vec<f64>,
    pub noise_variation: Vec<f64>,
    pub stochastic_integral: Vec<f64>,
    pub deformation: Vec<f64>,
    pub residual: Vec<f64>,
    /// Per node: `|deformation_term - (Phi X, X)_0|` relative to `|X|_t^2`.
    pub deformation_mismatch: Vec<f64>,
}

impl TransportLedger {
    pub fn final_residual(&self) -> f64 {
        *self.residual.last().unwrap_or(&0.0)
    }
}

/// Evaluates the moving-curve energy balance along a path: the dissipation
/// is integrated over `Gamma_s` against its own volume, the noise terms use
/// grid-level inner products, and the motion enters through the deformation
/// tensor. Each node also records how far the deformation term is from the
/// abstract `(Phi X, X)_0`.
pub fn stochastic_transport_residual<T: Real>(
    path: &PathState<T>,
    gram: &GramPath<T>,
    basis: &TimeBasis<T>,
    model: &StefanModel<T>,
) -> Result<TransportLedger> {
    check_path(path, gram, basis)?;
    let two = lit::<T>(2.0);
    let half = lit::<T>(0.5);
    let steps = path.steps();
    let fields: Vec<Vec<T>> = path.coords.iter().map(|x| basis.reconstruct(x)).collect();
    let energy: Vec<T> = (0..=steps).map(|m| gram.hminus_inner(m, &fields[m], &fields[m])).collect::<Result<_>>()?;
    let deform: Vec<T> = (0..=steps).map(|m| deformation_term(gram, m, &fields[m])).collect::<Result<_>>()?;
    let mismatch: Vec<f64> = (0..=steps)
        .map(|m| -> Result<f64> {
            let phi = gram.phi_form(m, &fields[m], &fields[m])?;
            let scale = energy[m].max(T::min_positive_value());
            Ok(to_f64((deform[m] - phi).abs() / scale))
        })
        .collect::<Result<_>>()?;

    let (mut diss, mut qv, mut mart, mut def) = (T::zero(), T::zero(), T::zero(), T::zero());
    let mut rows = vec![[T::zero(); 4]];
    for m in 0..steps {
        let grid = gram.grid(m)?;
        let u = &fields[m];
        // The state on Gamma_s is the density u / rn.
        let moved: Vec<T> = u.iter().zip(&grid.rn_derivative).map(|(&a, &r)| a / r).collect();
        let integrand: Vec<T> = moved.iter().map(|&v| model.nonlinearity.psi(v) * v).collect();
        let dt = gram.step(m);
        diss = diss - two * grid.surface_integral(&integrand) * dt;

        let c = sde_coefficients(gram, basis, model, m, &path.coords[m])?;
        let dm: Vec<T> = (0..basis.n()).map(|k| c.diffusion[k] * path.increments[m][k]).collect();
        let z = basis.reconstruct(&dm);
        if dm.iter().any(|v| *v != T::zero()) {
            qv = qv + gram.hminus_inner(m, &z, &z)?;
            mart = mart + two * gram.hminus_inner(m, u, &z)?;
        }
        let end = &fields[m + 1];
        def = def + half * dt * (deformation_term(gram, m, end)? + deformation_term(gram, m + 1, end)?);
        rows.push([diss, qv, mart, def]);
    }
    let col = |k: usize| rows.iter().map(|r| to_f64(r[k])).collect::<Vec<_>>();
    let residual = (0..=steps)
        .map(|m| to_f64(energy[m] - energy[0] - rows[m].iter().copied().fold(T::zero(), |a, b| a + b)))
        .collect();
    Ok(TransportLedger {
        times: gram.times().into_iter().map(to_f64).collect(),
        energy: energy.into_iter().map(to_f64).collect(),
        dissipation: col(0),
        noise_variation: col(1),
        stochastic_integral: col(2),
        deformation: col(3),
        residual,
        deformation_mismatch: mismatch,
    })
}

/// Which balance a refinement study evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Balance {
    Ito,
    Transport,
}

/// Mean `|residual(T)|` at two step sizes driven by the same Brownian paths.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RefinementStudy {
    pub balance: Balance,
    pub coarse_steps: usize,
    pub fine_steps: usize,
    pub paths: usize,
    pub failed: usize,
    pub coarse_mean: f64,
    pub coarse_stderr: f64,
    pub fine_mean: f64,
    pub fine_stderr: f64,
    /// `coarse_mean / fine_mean`; about 2 for a first-order residual.
    pub ratio: f64,
}

/// Runs `paths` paths on `fine` and on `coarse` (half as many steps), the
/// coarse increments being pairwise sums of the fine ones, and compares the
/// terminal residuals of the chosen balance.
#[allow(clippy::too_many_arguments)]
pub fn refinement_study<T: Real>(
    coarse: (&GramPath<T>, &TimeBasis<T>),
    fine: (&GramPath<T>, &TimeBasis<T>),
    model: &StefanModel<T>,
    x0: &[T],
    balance: Balance,
    master_seed: u64,
    paths: usize,
) -> Result<RefinementStudy> {
    use crate::galerkin::{brownian_increments, coarsen, mean_stderr, path_seed, simulate_with_increments};
    use rayon::prelude::*;
    let (cg, cb) = coarse;
    let (fg, fb) = fine;
    if fg.steps() != 2 * cg.steps() {
        return Err(Error::Dimension { expected: 2 * cg.steps(), got: fg.steps() });
    }
    let dts: Vec<T> = (0..fg.steps()).map(|k| fg.step(k)).collect();
    let terminal = |g: &GramPath<T>, b: &TimeBasis<T>, p: &PathState<T>| -> Result<f64> {
        Ok(match balance {
            Balance::Ito => ito_residual(p, g, b, model)?.final_residual(),
            Balance::Transport => stochastic_transport_residual(p, g, b, model)?.final_residual(),
        })
    };
    let per_path: Vec<Result<Option<(f64, f64)>>> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let seed = path_seed(master_seed, i as u64);
            let inc = brownian_increments(seed, fb.n(), &dts);
            let pf = simulate_with_increments(fg, fb, model, x0, &inc, seed);
            let pc = simulate_with_increments(cg, cb, model, x0, &coarsen(&inc)?, seed);
            match (pf, pc) {
                (Ok(pf), Ok(pc)) => Ok(Some((terminal(cg, cb, &pc)?.abs(), terminal(fg, fb, &pf)?.abs()))),
                (Err(Error::BlowUp { .. }), _) | (_, Err(Error::BlowUp { .. })) => Ok(None),
                (Err(e), _) | (_, Err(e)) => Err(e),
            }
        })
        .collect();
    let mut c = Vec::new();
    let mut f = Vec::new();
    let mut failed = 0;
    for r in per_path {
        match r? {
            Some((a, b)) => {
                c.push(a);
                f.push(b);
            }
            None => failed += 1,
        }
    }
    let (cm, cs) = mean_stderr(&c);
    let (fm, fs) = mean_stderr(&f);
    Ok(RefinementStudy {
        balance,
        coarse_steps: cg.steps(),
        fine_steps: fg.steps(),
        paths: c.len(),
        failed,
        coarse_mean: cm,
        coarse_stderr: cs,
        fine_mean: fm,
        fine_stderr: fs,
        ratio: cm / fm,
    })
}
