//! Time-dependent Galerkin approximation.
//!
//! A fixed seed basis `{phi_k}` of zero-mean grid functions, orthonormal in
//! the reference product, spans `H_n`. At each time node the seeds are
//! re-orthonormalized in `(.,.)_t`, giving `e_i(t)` and the projection
//! `P_n(t)`. A Galerkin state is the coordinate vector `x` of
//! `X = sum_k x_k phi_k`, so `|X|_t^2 = x^T G(t) x` with the Gram matrix
//! `G_ij(t) = (phi_i, phi_j)_t`, and `P_n(t) f` has coordinates `G(t)^{-1} r`
//! where `r_j = <f, iota*_t phi_j>`.

use crate::error::{Error, Result};
use crate::geometry::MovingCurve;
use crate::linalg::{dot, max_abs, norm2, Matrix};
use crate::operators::{psi_field, Coupling, StefanModel};
use crate::scalar::{from_usize, lit, to_f64, Real};
use crate::spaces::{lp_norm0, GramPath};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

/// Paths are abandoned once the coordinate norm exceeds this.
pub const BLOW_UP_NORM: f64 = 1e8;

/// Relative pivot below which Gram-Schmidt reports rank deficiency.
pub const RANK_TOL: f64 = 1e-12;

/// Classical Gram-Schmidt with one reorthogonalization pass in `(.,.)_{t_m}`.
pub fn gram_schmidt<T: Real>(gram: &GramPath<T>, vectors: &[Vec<T>], m: usize) -> Result<Vec<Vec<T>>> {
    let mut out: Vec<Vec<T>> = Vec::with_capacity(vectors.len());
    for (k, v) in vectors.iter().enumerate() {
        let lead = gram.hminus_norm(m, v)?;
        let mut w = v.clone();
        for _pass in 0..2 {
            let proj: Vec<T> = out.iter().map(|e| gram.hminus_inner(m, &w, e)).collect::<Result<_>>()?;
            for (e, &c) in out.iter().zip(&proj) {
                for (wi, &ei) in w.iter_mut().zip(e) {
                    *wi = *wi - c * ei;
                }
            }
            w = gram.project_zero_mean(&w);
        }
        let norm = gram.hminus_norm(m, &w)?;
        if !(norm > lit::<T>(RANK_TOL) * lead) {
            return Err(Error::RankDeficient { index: k, pivot: to_f64(norm / lead.max(T::min_positive_value())) });
        }
        out.push(w.iter().map(|&x| x / norm).collect());
    }
    Ok(out)
}

/// Zero-mean Fourier modes `cos t, sin t, cos 2t, ...`, orthonormalized in
/// the reference product. Nested: the first `k` elements do not depend on `n`.
pub fn fourier_seed<T: Real>(gram: &GramPath<T>, n: usize) -> Result<Vec<Vec<T>>> {
    if n == 0 || n > gram.n_grid() / 2 {
        return Err(Error::InvalidParameter(format!(
            "Galerkin dimension {n} exceeds resolvable modes ({} grid nodes)",
            gram.n_grid()
        )));
    }
    let theta = gram.nodes().theta();
    let raw: Vec<Vec<T>> = (0..n)
        .map(|i| {
            let k: T = from_usize(i / 2 + 1);
            let f: Vec<T> = theta.iter().map(|&t| if i % 2 == 0 { (k * t).cos() } else { (k * t).sin() }).collect();
            gram.project_zero_mean(&f)
        })
        .collect();
    gram_schmidt(gram, &raw, 0)
}

/// Seed basis plus, per time node, the Gram matrix, its time derivative and
/// the triangular coefficients of the orthonormalized basis.
#[derive(Debug, Clone)]
pub struct TimeBasis<T> {
    seed: Vec<Vec<T>>,
    gram: Vec<Matrix<T>>,
    gram_rate: Vec<Matrix<T>>,
    /// Upper triangular `C_m` with `e_i(t_m) = sum_j C_m[j, i] phi_j`.
    coeffs: Vec<Matrix<T>>,
}

impl<T: Real> TimeBasis<T> {
    /// Builds the per-node tables for a `(.,.)_0`-orthonormal seed.
    pub fn build(gram: &GramPath<T>, seed: Vec<Vec<T>>) -> Result<Self> {
        for s in &seed {
            gram.check_zero_mean(s)?;
        }
        let n = seed.len();
        let weighted: Vec<Vec<T>> =
            seed.iter().map(|s| s.iter().zip(gram.mass0()).map(|(&x, &w)| x * w).collect()).collect();
        let tables = (0..gram.len())
            .into_par_iter()
            .map(|m| -> Result<(Matrix<T>, Matrix<T>, Matrix<T>)> {
                let y: Vec<Vec<T>> = seed.iter().map(|s| gram.riesz_solve(m, s)).collect::<Result<_>>()?;
                let sy: Vec<Vec<T>> = y.iter().map(|v| gram.stiffness_rate_apply(m, v)).collect::<Result<_>>()?;
                let g = Matrix::from_fn(n, n, |i, j| dot(&weighted[i], &y[j])).symmetrized();
                let gd = Matrix::from_fn(n, n, |i, j| -dot(&y[i], &sy[j])).symmetrized();
                let c = orthonormal_coefficients(&g)?;
                Ok((g, gd, c))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = Self { seed, gram: Vec::new(), gram_rate: Vec::new(), coeffs: Vec::new() };
        for (g, gd, c) in tables {
            out.gram.push(g);
            out.gram_rate.push(gd);
            out.coeffs.push(c);
        }
        Ok(out)
    }

    /// [`fourier_seed`] followed by [`TimeBasis::build`].
    pub fn fourier(gram: &GramPath<T>, n: usize) -> Result<Self> {
        Self::build(gram, fourier_seed(gram, n)?)
    }

    /// Galerkin dimension `n`.
    pub fn n(&self) -> usize {
        self.seed.len()
    }

    pub fn nodes(&self) -> usize {
        self.gram.len()
    }

    pub fn seed(&self) -> &[Vec<T>] {
        &self.seed
    }

    /// `G(t_m)`, `G_ij = (phi_i, phi_j)_{t_m}`.
    pub fn gram_matrix(&self, m: usize) -> &Matrix<T> {
        &self.gram[m]
    }

    /// `G'(t_m)`, `G'_ij = (phi_i, Phi(t_m) phi_j)_0`.
    pub fn gram_rate(&self, m: usize) -> &Matrix<T> {
        &self.gram_rate[m]
    }

    pub fn coefficients(&self, m: usize) -> &Matrix<T> {
        &self.coeffs[m]
    }

    /// The orthonormal basis `e_i(t_m)` as grid functions.
    pub fn basis_at(&self, m: usize) -> Vec<Vec<T>> {
        let c = &self.coeffs[m];
        (0..self.n()).map(|i| self.reconstruct(&c.column(i))).collect()
    }

    /// `sum_k x_k phi_k`.
    pub fn reconstruct(&self, x: &[T]) -> Vec<T> {
        let len = self.seed.first().map_or(0, Vec::len);
        let mut out = vec![T::zero(); len];
        for (s, &c) in self.seed.iter().zip(x) {
            for (o, &v) in out.iter_mut().zip(s) {
                *o = *o + c * v;
            }
        }
        out
    }

    /// `|X|_{t_m}` for coordinates `x`.
    pub fn norm_t(&self, m: usize, x: &[T]) -> T {
        self.gram[m].bilinear(x, x).max(T::zero()).sqrt()
    }

    /// `G(t_m)^{-1} r = C C^T r`.
    pub fn solve_gram(&self, m: usize, r: &[T]) -> Vec<T> {
        let c = &self.coeffs[m];
        c.matvec(&c.tr_matvec(r))
    }

    /// The leading `k`-dimensional sub-basis (same seeds, leading blocks).
    pub fn truncate(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.n() {
            return Err(Error::Dimension { expected: self.n(), got: k });
        }
        let lead = |a: &Matrix<T>| Matrix::from_fn(k, k, |i, j| a[(i, j)]);
        Ok(Self {
            seed: self.seed[..k].to_vec(),
            gram: self.gram.iter().map(lead).collect(),
            gram_rate: self.gram_rate.iter().map(lead).collect(),
            coeffs: self.coeffs.iter().map(lead).collect(),
        })
    }

    /// `max_{m,i,j} |(e_i(t_m), e_j(t_m))_{t_m} - delta_ij|`, evaluated with
    /// the grid-level inner product rather than the cached Gram matrices.
    pub fn orthonormality_defect(&self, gram: &GramPath<T>) -> Result<T> {
        let per_node = (0..self.nodes())
            .into_par_iter()
            .map(|m| -> Result<T> {
                let e = self.basis_at(m);
                let mut worst = T::zero();
                for i in 0..e.len() {
                    let u = gram.riesz_solve(m, &e[i])?;
                    for (j, ej) in e.iter().enumerate() {
                        let w: T = ej.iter().zip(gram.mass0()).zip(&u).map(|((&a, &b), &c)| a * b * c).sum();
                        let target = if i == j { T::one() } else { T::zero() };
                        worst = worst.max((w - target).abs());
                    }
                }
                Ok(worst)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(per_node.into_iter().fold(T::zero(), T::max))
    }

    /// Seed coordinates of a grid function in `H_n` under the reference
    /// product: `x_j = (u, phi_j)_0`.
    pub fn coordinates0(&self, gram: &GramPath<T>, u: &[T]) -> Result<Vec<T>> {
        let y = gram.riesz_solve(0, u)?;
        Ok(self
            .seed
            .iter()
            .map(|s| s.iter().zip(gram.mass0()).zip(&y).map(|((&a, &b), &c)| a * b * c).sum())
            .collect())
    }
}

/// Coordinate-space CGS2 in the metric `g`: returns upper-triangular `C` with
/// `C^T g C = I`.
fn orthonormal_coefficients<T: Real>(g: &Matrix<T>) -> Result<Matrix<T>> {
    let n = g.rows();
    let mut cols: Vec<Vec<T>> = Vec::with_capacity(n);
    for k in 0..n {
        let mut v = vec![T::zero(); n];
        v[k] = T::one();
        let lead = g[(k, k)].sqrt();
        for _pass in 0..2 {
            let gv = g.matvec(&v);
            let proj: Vec<T> = cols.iter().map(|c| dot(c, &gv)).collect();
            for (c, &p) in cols.iter().zip(&proj) {
                for (vi, &ci) in v.iter_mut().zip(c) {
                    *vi = *vi - p * ci;
                }
            }
        }
        let norm = g.bilinear(&v, &v).max(T::zero()).sqrt();
        if !(norm > lit::<T>(RANK_TOL) * lead) {
            return Err(Error::RankDeficient { index: k, pivot: to_f64(norm / lead) });
        }
        cols.push(v.iter().map(|&x| x / norm).collect());
    }
    Ok(Matrix::from_columns(&cols))
}

/// Coordinates of `P_n(t_m) u` for `u` in the pivot space.
pub fn projection_coords<T: Real>(gram: &GramPath<T>, basis: &TimeBasis<T>, m: usize, u: &[T]) -> Result<Vec<T>> {
    let y = gram.riesz_solve(m, u)?;
    let r: Vec<T> = basis
        .seed()
        .iter()
        .map(|s| s.iter().zip(gram.mass0()).zip(&y).map(|((&a, &b), &c)| a * b * c).sum())
        .collect();
    Ok(basis.solve_gram(m, &r))
}

/// `P_n(t_m) u` as a grid function.
pub fn projection_pn<T: Real>(gram: &GramPath<T>, basis: &TimeBasis<T>, m: usize, u: &[T]) -> Result<Vec<T>> {
    Ok(basis.reconstruct(&projection_coords(gram, basis, m, u)?))
}

/// `P_n(t_m) f` for a functional given by its pairing `v -> <f, v>`:
/// coordinates `G^{-1} r` with `r_j = <f, iota*_t phi_j>`.
pub fn projection_functional<T: Real>(
    gram: &GramPath<T>,
    basis: &TimeBasis<T>,
    m: usize,
    pairing: impl Fn(&[T]) -> Result<T>,
) -> Result<Vec<T>> {
    let r: Vec<T> = basis
        .seed()
        .iter()
        .map(|s| pairing(&gram.project_zero_mean(&gram.iota_star(m, s)?)))
        .collect::<Result<_>>()?;
    Ok(basis.reconstruct(&basis.solve_gram(m, &r)))
}

/// Drift and (diagonal) diffusion of the reduced system at one node.
#[derive(Debug, Clone, PartialEq)]
pub struct SdeCoefficients<T> {
    pub drift: Vec<T>,
    /// `b_kk`; mode `k` is driven by the `k`-th Brownian coordinate only.
    pub diffusion: Vec<T>,
}

impl<T: Real> SdeCoefficients<T> {
    pub fn diffusion_matrix(&self) -> Matrix<T> {
        let n = self.diffusion.len();
        Matrix::from_fn(n, n, |i, j| if i == j { self.diffusion[i] } else { T::zero() })
    }
}

/// Coefficients of `dx = a(t, x) dt + b(t, x) dB` at node `m`.
///
/// The drift pairs the transformed drift with the seeds,
/// `r_j = <A(t, X), iota*_t phi_j> = -int_{Gamma_0} Psi(X / rn) phi_j`, so no
/// solve beyond `G^{-1}` is needed. The noise field `sigma_k` is a multiple of
/// `phi_k`, which `P_n` fixes, so `b` is diagonal.
pub fn sde_coefficients<T: Real>(
    gram: &GramPath<T>,
    basis: &TimeBasis<T>,
    model: &StefanModel<T>,
    m: usize,
    x: &[T],
) -> Result<SdeCoefficients<T>> {
    let n = basis.n();
    if x.len() != n {
        return Err(Error::Dimension { expected: n, got: x.len() });
    }
    let u = basis.reconstruct(x);
    let psi = psi_field(gram, model, m, &u)?;
    let weighted: Vec<T> = psi.iter().zip(gram.mass0()).map(|(&p, &w)| p * w).collect();
    let r: Vec<T> = basis.seed().iter().map(|s| -dot(&weighted, s)).collect();
    let drift = basis.solve_gram(m, &r);
    let g = basis.gram_matrix(m);
    let diffusion = (0..n)
        .map(|k| match model.noise.amplitudes.get(k) {
            None => T::zero(),
            Some(&gamma) => match model.noise.coupling {
                Coupling::Additive => gamma,
                Coupling::LinearMultiplicative => {
                    let gx: T = (0..n).map(|i| g[(i, k)] * x[i]).sum();
                    gamma * gx / g[(k, k)]
                }
            },
        })
        .collect();
    Ok(SdeCoefficients { drift, diffusion })
}

/// SplitMix64 mix of a master seed and an index, used for per-path streams.
pub fn path_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Brownian increments `dB_m ~ N(0, dt_m I_dim)`. To couple systems of
/// different size, draw at the largest dimension and let smaller systems
/// use the leading coordinates.
pub fn brownian_increments<T: Real>(seed: u64, dim: usize, steps: &[T]) -> Vec<Vec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    steps
        .iter()
        .map(|&dt| {
            let s = dt.sqrt();
            (0..dim).map(|_| lit::<T>(rng.sample::<f64, _>(StandardNormal)) * s).collect()
        })
        .collect()
}

/// Increments on the grid with twice the step: sums of consecutive pairs.
pub fn coarsen<T: Real>(increments: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
    if increments.len() % 2 != 0 {
        return Err(Error::InvalidParameter("coarsening needs an even number of steps".into()));
    }
    Ok(increments.chunks(2).map(|p| p[0].iter().zip(&p[1]).map(|(&a, &b)| a + b).collect()).collect())
}

/// One Galerkin trajectory and the increments that drove it.
#[derive(Debug, Clone, PartialEq)]
pub struct PathState<T> {
    /// `x_{t_m}`, `m = 0..=M`.
    pub coords: Vec<Vec<T>>,
    /// `dB_m`, `m = 0..M`, restricted to the Galerkin dimension.
    pub increments: Vec<Vec<T>>,
    pub rng_seed: u64,
}

impl<T: Real> PathState<T> {
    pub fn n(&self) -> usize {
        self.coords.first().map_or(0, Vec::len)
    }

    pub fn steps(&self) -> usize {
        self.increments.len()
    }

    /// `|X_{t_m}|_{t_m}` at every node.
    pub fn norms(&self, basis: &TimeBasis<T>) -> Vec<T> {
        self.coords.iter().enumerate().map(|(m, x)| basis.norm_t(m, x)).collect()
    }

    /// Largest `|mean_0(X_{t_m})|` relative to `max |X_{t_m}|`.
    pub fn zero_mean_defect(&self, gram: &GramPath<T>, basis: &TimeBasis<T>) -> T {
        self.coords
            .iter()
            .map(|x| {
                let u = basis.reconstruct(x);
                gram.mean0(&u).abs() / max_abs(&u).max(T::min_positive_value())
            })
            .fold(T::zero(), T::max)
    }
}

/// Euler-Maruyama driven by given increments (only the leading `n`
/// coordinates are used).
pub fn simulate_with_increments<T: Real>(
    gram: &GramPath<T>,
    basis: &TimeBasis<T>,
    model: &StefanModel<T>,
    x0: &[T],
    increments: &[Vec<T>],
    rng_seed: u64,
) -> Result<PathState<T>> {
    let n = basis.n();
    if increments.len() != gram.steps() || basis.nodes() != gram.len() {
        return Err(Error::Dimension { expected: gram.steps(), got: increments.len() });
    }
    if x0.len() != n {
        return Err(Error::Dimension { expected: n, got: x0.len() });
    }
    if let Some(bad) = increments.iter().find(|d| d.len() < n) {
        return Err(Error::Dimension { expected: n, got: bad.len() });
    }
    let mut coords = Vec::with_capacity(increments.len() + 1);
    coords.push(x0.to_vec());
    let limit = lit::<T>(BLOW_UP_NORM);
    for (m, db) in increments.iter().enumerate() {
        let x = &coords[m];
        let c = sde_coefficients(gram, basis, model, m, x)?;
        let dt = gram.step(m);
        let next: Vec<T> = (0..n).map(|i| x[i] + c.drift[i] * dt + c.diffusion[i] * db[i]).collect();
        let size = norm2(&next);
        if !size.is_finite() || size > limit {
            return Err(Error::BlowUp { step: m + 1, norm: to_f64(size) });
        }
        coords.push(next);
    }
    Ok(PathState { coords, increments: increments.iter().map(|d| d[..n].to_vec()).collect(), rng_seed })
}

/// Euler-Maruyama with increments drawn from `rng_seed`.
pub fn simulate_path<T: Real>(
    gram: &GramPath<T>,
    basis: &TimeBasis<T>,
    model: &StefanModel<T>,
    x0: &[T],
    rng_seed: u64,
) -> Result<PathState<T>> {
    let steps: Vec<T> = (0..gram.steps()).map(|m| gram.step(m)).collect();
    let inc = brownian_increments(rng_seed, basis.n(), &steps);
    simulate_with_increments(gram, basis, model, x0, &inc, rng_seed)
}

/// Independent paths from `path_seed(master, i)`; blown-up paths are counted
/// and dropped. The order of `paths` follows the path index.
#[derive(Debug, Clone)]
pub struct Ensemble<T> {
    pub paths: Vec<PathState<T>>,
    pub failed: usize,
}

pub fn simulate_ensemble<T: Real>(
    gram: &GramPath<T>,
    basis: &TimeBasis<T>,
    model: &StefanModel<T>,
    x0: &[T],
    master_seed: u64,
    count: usize,
) -> Result<Ensemble<T>> {
    let results: Vec<Result<PathState<T>>> = (0..count)
        .into_par_iter()
        .map(|i| simulate_path(gram, basis, model, x0, path_seed(master_seed, i as u64)))
        .collect();
    let mut paths = Vec::with_capacity(count);
    let mut failed = 0;
    for r in results {
        match r {
            Ok(p) => paths.push(p),
            Err(Error::BlowUp { .. }) => failed += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(Ensemble { paths, failed })
}

/// Sample mean and its standard error.
pub fn mean_stderr<T: Real>(values: &[T]) -> (T, T) {
    let k: T = from_usize(values.len());
    if values.is_empty() {
        return (T::nan(), T::nan());
    }
    let mean = values.iter().copied().sum::<T>() / k;
    if values.len() < 2 {
        return (mean, T::zero());
    }
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / (k - T::one());
    (mean, (var / k).sqrt())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MomentEstimate {
    pub n: usize,
    pub steps: usize,
    pub paths: usize,
    pub failed: usize,
    pub moment_p: f64,
    /// `E[sup_t |X_t|_t^p]`
    pub sup_estimate: f64,
    pub sup_stderr: f64,
    /// `E[(int_0^T ||X_t||_V^alpha dt)^{p/2}]`, `alpha` the growth exponent.
    pub integral_estimate: f64,
    pub integral_stderr: f64,
}

/// Monte-Carlo moments of an ensemble.
pub fn moment_estimate<T: Real>(
    ensemble: &Ensemble<T>,
    gram: &GramPath<T>,
    basis: &TimeBasis<T>,
    model: &StefanModel<T>,
    p: T,
) -> MomentEstimate {
    let alpha = model.growth_exponent();
    let half = lit::<T>(0.5);
    let (sups, integrals): (Vec<T>, Vec<T>) = ensemble
        .paths
        .par_iter()
        .map(|path| {
            let sup = path.norms(basis).into_iter().fold(T::zero(), T::max).powf(p);
            let v: Vec<T> =
                path.coords.iter().map(|x| lp_norm0(gram, &basis.reconstruct(x), alpha).powf(alpha)).collect();
            let integral = gram.trapezoid(&v, gram.steps());
            (sup, integral.powf(p * half))
        })
        .unzip();
    let (s, se) = mean_stderr(&sups);
    let (i, ie) = mean_stderr(&integrals);
    MomentEstimate {
        n: basis.n(),
        steps: gram.steps(),
        paths: ensemble.paths.len(),
        failed: ensemble.failed,
        moment_p: to_f64(p),
        sup_estimate: to_f64(s),
        sup_stderr: to_f64(se),
        integral_estimate: to_f64(i),
        integral_stderr: to_f64(ie),
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    /// `E[sup_m |X^{2n} - X^n|_{t_m}^2]^{1/2}`
    pub distance: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub paths: usize,
    pub failed: usize,
}

impl ConvergenceTable {
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].distance < w[0].distance)
    }
}

/// Cauchy distances between Galerkin levels `n` and `2n` under common noise.
///
/// `basis` must have dimension at least `2 max(n_list)`; smaller levels use
/// its leading blocks. Every level of path `i` is driven by the leading
/// coordinates of one increment stream seeded by `path_seed(master, i)`,
/// and starts from the projection of `u0`.
pub fn galerkin_convergence<T: Real>(
    gram: &GramPath<T>,
    basis: &TimeBasis<T>,
    model: &StefanModel<T>,
    n_list: &[usize],
    u0: &[T],
    master_seed: u64,
    paths: usize,
) -> Result<ConvergenceTable> {
    let top = n_list.iter().copied().max().unwrap_or(0) * 2;
    if top == 0 || top > basis.n() {
        return Err(Error::Dimension { expected: top, got: basis.n() });
    }
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("Galerkin levels must be increasing".into()));
    }
    let mut levels: Vec<usize> = n_list.iter().flat_map(|&n| [n, 2 * n]).collect();
    levels.sort_unstable();
    levels.dedup();
    let bases: Vec<TimeBasis<T>> = levels.iter().map(|&k| basis.truncate(k)).collect::<Result<_>>()?;
    let x0_full = basis.truncate(top)?.coordinates0(gram, u0)?;
    let steps: Vec<T> = (0..gram.steps()).map(|m| gram.step(m)).collect();

    let per_path: Vec<Result<Option<Vec<T>>>> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let seed = path_seed(master_seed, i as u64);
            let inc = brownian_increments(seed, top, &steps);
            let mut runs = Vec::with_capacity(levels.len());
            for b in &bases {
                match simulate_with_increments(gram, b, model, &x0_full[..b.n()], &inc, seed) {
                    Ok(p) => runs.push(p),
                    Err(Error::BlowUp { .. }) => return Ok(None),
                    Err(e) => return Err(e),
                }
            }
            let gaps = n_list
                .iter()
                .map(|&n| {
                    let lo = &runs[levels.iter().position(|&k| k == n).expect("level")];
                    let hi_idx = levels.iter().position(|&k| k == 2 * n).expect("level");
                    let hi = &runs[hi_idx];
                    let hb = &bases[hi_idx];
                    (0..gram.len())
                        .map(|m| {
                            let mut d = hi.coords[m].clone();
                            for (dj, &l) in d.iter_mut().zip(&lo.coords[m]) {
                                *dj = *dj - l;
                            }
                            hb.gram_matrix(m).bilinear(&d, &d)
                        })
                        .fold(T::zero(), T::max)
                })
                .collect();
            Ok(Some(gaps))
        })
        .collect();

    let mut samples: Vec<Vec<T>> = Vec::new();
    let mut failed = 0;
    for r in per_path {
        match r? {
            Some(g) => samples.push(g),
            None => failed += 1,
        }
    }
    let rows = n_list
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let v: Vec<T> = samples.iter().map(|s| s[j]).collect();
            let (mean, se) = mean_stderr(&v);
            let d = mean.sqrt();
            ConvergenceRow { n, distance: to_f64(d), stderr: to_f64(se / (lit::<T>(2.0) * d)) }
        })
        .collect();
    Ok(ConvergenceTable { rows, paths: samples.len(), failed })
}

/// Runs two fully independent pipelines (inner-product tables, basis,
/// simulation) on identical inputs and noise and returns
/// `max_m |X_{t_m} - Y_{t_m}|_{t_m}`.
pub fn pathwise_uniqueness_check<T: Real>(
    curve: &dyn MovingCurve<T>,
    n_grid: usize,
    steps: usize,
    n: usize,
    model: &StefanModel<T>,
    u0: &[T],
    rng_seed: u64,
) -> Result<T> {
    let run = || -> Result<(PathState<T>, TimeBasis<T>)> {
        let gram = GramPath::build(curve, n_grid, steps)?;
        let basis = TimeBasis::fourier(&gram, n)?;
        let x0 = basis.coordinates0(&gram, u0)?;
        Ok((simulate_path(&gram, &basis, model, &x0, rng_seed)?, basis))
    };
    let (x, basis) = run()?;
    let (y, _) = run()?;
    Ok((0..x.coords.len())
        .map(|m| {
            let d: Vec<T> = x.coords[m].iter().zip(&y.coords[m]).map(|(&a, &b)| a - b).collect();
            basis.norm_t(m, &d)
        })
        .fold(T::zero(), T::max))
}
