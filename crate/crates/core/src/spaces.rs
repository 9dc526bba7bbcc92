//! Time-dependent inner products on the zero-mean negative Sobolev space of
//! the reference curve.
//!
//! Grid functions are nodal values on the reference nodes. The product at time
//! `t` is `(f, g)_t = f^T M S(t)^+ M g`, where `M` is the reference lumped mass
//! and `S(t)` the stiffness with the moved metric. The pseudo-inverse is a
//! bordered solve enforcing zero reference mean, so it is exact on the
//! zero-mean block.

use crate::error::{Error, Result};
use crate::geometry::{assemble_stiffness, FrozenCurve, MovingCurve, PeriodicNodes, SurfaceGrid};
use crate::linalg::{dot, max_abs, sub, Lu, Matrix};
use crate::scalar::{from_usize, lit, to_f64, Real};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

/// Relative tolerance for the zero-mean precondition.
pub const ZERO_MEAN_TOL: f64 = 1e-10;

/// Geometry-dependent data at one time node.
#[derive(Debug, Clone)]
pub struct GramSlice<T> {
    pub t: T,
    pub grid: SurfaceGrid<T>,
    weights: Vec<T>,
    weight_rates: Vec<T>,
    kappa: T,
    kappa_rate: T,
    bordered: Lu<T>,
}

impl<T: Real> GramSlice<T> {
    fn build(curve: &dyn MovingCurve<T>, nodes: &Arc<PeriodicNodes<T>>, mass0: &[T], t: T) -> Result<Self> {
        let grid = SurfaceGrid::build(curve, nodes.clone(), t)?;
        let weights = grid.stiffness_weights();
        let weight_rates = grid.stiffness_weight_rates();
        let kappa = nodes.nyquist_coefficient(&weights);
        let kappa_rate = nodes.nyquist_coefficient(&weight_rates);
        let s = assemble_stiffness(nodes, &weights, kappa);
        let n = nodes.len();
        // Balance the constraint row against the stiffness scale.
        let scale = s.max_abs() / max_abs(mass0);
        let k = Matrix::from_fn(n + 1, n + 1, |i, j| match (i < n, j < n) {
            (true, true) => s[(i, j)],
            (true, false) => scale * mass0[i],
            (false, true) => scale * mass0[j],
            (false, false) => T::zero(),
        });
        let bordered = Lu::factor(k)?;
        Ok(Self { t, grid, weights, weight_rates, kappa, kappa_rate, bordered })
    }

    /// Solves `S u = b - lambda M 1` with `u` of zero reference mean; for `b`
    /// in the range of `S` the multiplier vanishes.
    fn solve(&self, b: &[T]) -> Vec<T> {
        let mut rhs = b.to_vec();
        rhs.push(T::zero());
        let mut u = self.bordered.solve(&rhs);
        u.pop();
        u
    }

    fn stiffness_apply(&self, u: &[T]) -> Vec<T> {
        self.grid.nodes().stiffness_apply(&self.weights, self.kappa, u)
    }

    fn stiffness_rate_apply(&self, u: &[T]) -> Vec<T> {
        self.grid.nodes().stiffness_apply(&self.weight_rates, self.kappa_rate, u)
    }
}

/// Stiffness matrices, their time derivatives and factorizations on a
/// uniform time grid `t_m = m T / M`, `m = 0..=M`.
#[derive(Debug, Clone)]
pub struct GramPath<T> {
    nodes: Arc<PeriodicNodes<T>>,
    mass0: Vec<T>,
    slices: Vec<GramSlice<T>>,
    horizon: T,
    curve_name: String,
}

impl<T: Real> GramPath<T> {
    /// Assembles the path on `n_grid` nodes with `steps` time steps on `[0, T]`.
    pub fn build(curve: &dyn MovingCurve<T>, n_grid: usize, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidParameter("need at least one time step".into()));
        }
        let horizon = curve.horizon();
        let times: Vec<T> = (0..=steps).map(|m| horizon * from_usize(m) / from_usize(steps)).collect();
        Self::build_at(curve, n_grid, &times)
    }

    /// Assembles the path at explicit times; `times[0]` must be `0`.
    pub fn build_at(curve: &dyn MovingCurve<T>, n_grid: usize, times: &[T]) -> Result<Self> {
        if times.first() != Some(&T::zero()) {
            return Err(Error::InvalidParameter("time grid must start at t = 0".into()));
        }
        let nodes = Arc::new(PeriodicNodes::new(n_grid));
        let grid0 = SurfaceGrid::build(curve, nodes.clone(), T::zero())?;
        let mass0 = grid0.mass_diag();
        let slices = times
            .par_iter()
            .map(|&t| GramSlice::build(curve, &nodes, &mass0, t))
            .collect::<Result<Vec<_>>>()?;
        let horizon = *times.last().expect("non-empty");
        Ok(Self { nodes, mass0, slices, horizon, curve_name: curve.name().to_string() })
    }

    pub fn curve_name(&self) -> &str {
        &self.curve_name
    }

    pub fn nodes(&self) -> &Arc<PeriodicNodes<T>> {
        &self.nodes
    }

    pub fn n_grid(&self) -> usize {
        self.nodes.len()
    }

    /// Number of time nodes (`M + 1`).
    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    /// Number of time steps `M`.
    pub fn steps(&self) -> usize {
        self.slices.len() - 1
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn time(&self, m: usize) -> T {
        self.slices[m].t
    }

    pub fn times(&self) -> Vec<T> {
        self.slices.iter().map(|s| s.t).collect()
    }

    /// Step `t_{m+1} - t_m`.
    pub fn step(&self, m: usize) -> T {
        self.slices[m + 1].t - self.slices[m].t
    }

    /// Reference lumped mass `M` (diagonal).
    pub fn mass0(&self) -> &[T] {
        &self.mass0
    }

    pub fn slice(&self, m: usize) -> Result<&GramSlice<T>> {
        self.slices.get(m).ok_or(Error::NodeOutOfRange { index: m, len: self.slices.len() })
    }

    pub fn grid(&self, m: usize) -> Result<&SurfaceGrid<T>> {
        Ok(&self.slice(m)?.grid)
    }

    /// `S(t_m)` as a dense matrix.
    pub fn stiffness(&self, m: usize) -> Result<Matrix<T>> {
        let s = self.slice(m)?;
        Ok(assemble_stiffness(&self.nodes, &s.weights, s.kappa))
    }

    /// `dS/dt(t_m)` as a dense (symmetric) matrix.
    pub fn stiffness_rate(&self, m: usize) -> Result<Matrix<T>> {
        let s = self.slice(m)?;
        Ok(assemble_stiffness(&self.nodes, &s.weight_rates, s.kappa_rate))
    }

    /// `S'(t_m) u` without assembling the matrix.
    pub fn stiffness_rate_apply(&self, m: usize, u: &[T]) -> Result<Vec<T>> {
        Ok(self.slice(m)?.stiffness_rate_apply(u))
    }

    /// Reference mean `int f dvol_0 / |Gamma_0|`.
    pub fn mean0(&self, f: &[T]) -> T {
        dot(&self.mass0, f) / self.mass0.iter().copied().sum::<T>()
    }

    pub fn project_zero_mean(&self, f: &[T]) -> Vec<T> {
        let m = self.mean0(f);
        f.iter().map(|&x| x - m).collect()
    }

    pub fn check_zero_mean(&self, f: &[T]) -> Result<()> {
        if f.len() != self.mass0.len() {
            return Err(Error::Dimension { expected: self.mass0.len(), got: f.len() });
        }
        let total = dot(&self.mass0, f);
        let scale = self.mass0.iter().zip(f).map(|(&m, &x)| m * x.abs()).sum::<T>();
        if total.abs() > lit::<T>(ZERO_MEAN_TOL) * scale + T::min_positive_value() {
            return Err(Error::NotZeroMean { mean: to_f64(total / self.mass0.iter().copied().sum::<T>()) });
        }
        Ok(())
    }

    fn weighted(&self, f: &[T]) -> Vec<T> {
        f.iter().zip(&self.mass0).map(|(&x, &m)| x * m).collect()
    }

    fn unweighted(&self, f: &[T]) -> Vec<T> {
        f.iter().zip(&self.mass0).map(|(&x, &m)| x / m).collect()
    }

    /// `R_{-t} f`: the zero-mean `u` with `S(t) u = M f`.
    pub fn riesz_solve(&self, m: usize, f: &[T]) -> Result<Vec<T>> {
        self.check_zero_mean(f)?;
        Ok(self.slice(m)?.solve(&self.weighted(f)))
    }

    /// `R_t u` as a grid function: `M^{-1} S(t) u`.
    pub fn riesz_map(&self, m: usize, u: &[T]) -> Result<Vec<T>> {
        Ok(self.unweighted(&self.slice(m)?.stiffness_apply(u)))
    }

    /// `(f, g)_t`.
    pub fn hminus_inner(&self, m: usize, f: &[T], g: &[T]) -> Result<T> {
        self.check_zero_mean(f)?;
        let u = self.riesz_solve(m, g)?;
        Ok(dot(&self.weighted(f), &u))
    }

    pub fn hminus_norm(&self, m: usize, f: &[T]) -> Result<T> {
        Ok(self.hminus_inner(m, f, f)?.max(T::zero()).sqrt())
    }

    /// Reference product `(f, g)_0`.
    pub fn inner0(&self, f: &[T], g: &[T]) -> Result<T> {
        self.hminus_inner(0, f, g)
    }

    /// `iota*_t f = R_0 R_{-t} f`, so that `(iota*_t f, g)_0 = (f, g)_t`.
    pub fn iota_star(&self, m: usize, f: &[T]) -> Result<Vec<T>> {
        if self.slice(m)?.t == T::zero() {
            self.check_zero_mean(f)?;
            return Ok(f.to_vec());
        }
        let u = self.riesz_solve(m, f)?;
        self.riesz_map(0, &u)
    }

    /// `iota*_{-t} f = R_t R_{-0} f`, the inverse of [`Self::iota_star`].
    pub fn iota_star_inverse(&self, m: usize, f: &[T]) -> Result<Vec<T>> {
        if self.slice(m)?.t == T::zero() {
            self.check_zero_mean(f)?;
            return Ok(f.to_vec());
        }
        let u = self.riesz_solve(0, f)?;
        self.riesz_map(m, &u)
    }

    /// `Phi(t) f = d/dt iota*_t f = -R_0 S(t)^+ S'(t) S(t)^+ M f`.
    pub fn phi_apply(&self, m: usize, f: &[T]) -> Result<Vec<T>> {
        let slice = self.slice(m)?;
        let u = self.riesz_solve(m, f)?;
        let w = slice.stiffness_rate_apply(&u);
        let z = slice.solve(&w);
        let y = self.riesz_map(0, &z)?;
        Ok(y.iter().map(|&v| -v).collect())
    }

    /// `(f, Phi(t) g)_0 = -(R_{-t} f)^T S'(t) (R_{-t} g)`.
    pub fn phi_form(&self, m: usize, f: &[T], g: &[T]) -> Result<T> {
        let slice = self.slice(m)?;
        let uf = self.riesz_solve(m, f)?;
        let ug = self.riesz_solve(m, g)?;
        Ok(-dot(&uf, &slice.stiffness_rate_apply(&ug)))
    }

    /// Dense `Phi(t) P_0`, where `P_0` removes the reference mean.
    pub fn phi_matrix(&self, m: usize) -> Result<Matrix<T>> {
        let n = self.n_grid();
        let cols = (0..n)
            .map(|j| {
                let mut e = vec![T::zero(); n];
                e[j] = T::one();
                self.phi_apply(m, &self.project_zero_mean(&e))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Matrix::from_columns(&cols))
    }

    /// Trapezoid approximation of `int_0^{t_m} q(s) ds` from nodal values.
    pub fn trapezoid(&self, values: &[T], m: usize) -> T {
        let half = lit::<T>(0.5);
        (0..m).map(|j| half * self.step(j) * (values[j] + values[j + 1])).sum()
    }
}

/// Draws a zero-mean field: white noise at the nodes when `modes` is `None`,
/// otherwise a random trigonometric polynomial of degree `modes` with
/// coefficients decaying like `1/k`.
pub fn random_zero_mean<T: Real, R: Rng + ?Sized>(gram: &GramPath<T>, rng: &mut R, modes: Option<usize>) -> Vec<T> {
    let theta = gram.nodes().theta();
    let f: Vec<T> = match modes {
        None => theta.iter().map(|_| lit::<T>(rng.sample::<f64, _>(StandardNormal))).collect(),
        Some(k_max) => {
            let coeffs: Vec<(f64, f64)> =
                (1..=k_max).map(|_| (rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
            theta
                .iter()
                .map(|&th| {
                    coeffs.iter().enumerate().fold(T::zero(), |s, (i, &(a, b))| {
                        let k: T = from_usize(i + 1);
                        s + (lit::<T>(a) * (k * th).cos() + lit::<T>(b) * (k * th).sin()) / k
                    })
                })
                .collect()
        }
    };
    gram.project_zero_mean(&f)
}

/// Norm of `f` (zero-mean on `Gamma_t`) computed on the curve `Gamma_t` itself,
/// treated as a fixed reference configuration.
pub fn moved_frame_norm<T: Real>(curve: &Arc<dyn MovingCurve<T>>, n_grid: usize, t: T, f: &[T]) -> Result<T> {
    let frozen = FrozenCurve::new(curve.clone(), t);
    let gram = GramPath::build_at(&frozen, n_grid, &[T::zero()])?;
    gram.hminus_norm(0, f)
}

/// Pulls a field on `Gamma_t` back to the reference curve as a density:
/// `f(G(t, .)) * dvol_{g^t} / dvol_g`.
pub fn pull_back_density<T: Real>(grid: &SurfaceGrid<T>, f: &[T]) -> Vec<T> {
    f.iter().zip(&grid.rn_derivative).map(|(&x, &r)| x * r).collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NormEquivalenceReport {
    /// Smallest `c` with `|x|/c <= |x|_t <= c |x|` over all samples and nodes.
    pub c1: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NormEvolutionReport {
    /// Largest `| |x|_t^2 - |x|_0^2 - int_0^t (x, Phi x)_0 |` over samples and nodes.
    pub max_residual: f64,
    pub final_residual: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LpBoundReport {
    pub p: f64,
    /// `sup ||iota*_t f||_{L^p} / ||f||_{L^p}`
    pub forward: f64,
    /// `sup ||iota*_{-t} f||_{L^p} / ||f||_{L^p}`
    pub inverse: f64,
    /// `sup ||iota*_{-t} iota*_t f - f||_inf / ||f||_inf`
    pub inverse_pair_residual: f64,
    pub samples: usize,
}

/// `L^p(Gamma_0)` norm of a grid function.
pub fn lp_norm0<T: Real>(gram: &GramPath<T>, f: &[T], p: T) -> T {
    gram.mass0().iter().zip(f).map(|(&m, &x)| m * x.abs().powf(p)).sum::<T>().powf(T::one() / p)
}

impl<T: Real> GramPath<T> {
    /// Samples the norm ratio `|x|_t / |x|_0` over all nodes.
    pub fn check_norm_equivalence<R: Rng + ?Sized>(&self, samples: usize, rng: &mut R) -> Result<NormEquivalenceReport> {
        let fields: Vec<Vec<T>> = (0..samples)
            .map(|i| random_zero_mean(self, rng, if i % 2 == 0 { None } else { Some(self.n_grid() / 4) }))
            .collect();
        let ratios = fields
            .par_iter()
            .map(|f| -> Result<(T, T)> {
                let base = self.hminus_inner(0, f, f)?;
                let mut lo = T::infinity();
                let mut hi = T::zero();
                for m in 0..self.len() {
                    let r = (self.hminus_inner(m, f, f)? / base).sqrt();
                    lo = lo.min(r);
                    hi = hi.max(r);
                }
                Ok((lo, hi))
            })
            .collect::<Result<Vec<_>>>()?;
        let lo = ratios.iter().fold(T::infinity(), |a, r| a.min(r.0));
        let hi = ratios.iter().fold(T::zero(), |a, r| a.max(r.1));
        Ok(NormEquivalenceReport {
            c1: to_f64(hi.max(T::one() / lo)),
            min_ratio: to_f64(lo),
            max_ratio: to_f64(hi),
            samples,
        })
    }

    /// Residual of `|x|_t^2 - |x|_0^2 = int_0^t (x, Phi(s) x)_0 ds` with the
    /// integral evaluated by the trapezoid rule on the path's time nodes.
    pub fn check_norm_evolution(&self, xs: &[Vec<T>]) -> Result<NormEvolutionReport> {
        let per_sample = xs
            .par_iter()
            .map(|x| -> Result<(T, T)> {
                let phi: Vec<T> = (0..self.len()).map(|m| self.phi_form(m, x, x)).collect::<Result<_>>()?;
                let base = self.hminus_inner(0, x, x)?;
                let mut worst = T::zero();
                let mut last = T::zero();
                for m in 0..self.len() {
                    let r = (self.hminus_inner(m, x, x)? - base - self.trapezoid(&phi, m)).abs();
                    worst = worst.max(r);
                    last = r;
                }
                Ok((worst, last))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(NormEvolutionReport {
            max_residual: to_f64(per_sample.iter().fold(T::zero(), |a, r| a.max(r.0))),
            final_residual: to_f64(per_sample.iter().fold(T::zero(), |a, r| a.max(r.1))),
            samples: xs.len(),
        })
    }

    /// `L^p` operator bounds of `iota*_t` and its inverse, plus the
    /// inverse-pair residual, over smooth random fields.
    pub fn check_lp_bounds<R: Rng + ?Sized>(&self, p: T, samples: usize, rng: &mut R) -> Result<LpBoundReport> {
        let modes = (self.n_grid() / 8).max(2);
        let fields: Vec<Vec<T>> = (0..samples).map(|_| random_zero_mean(self, rng, Some(modes))).collect();
        let rows = fields
            .par_iter()
            .map(|f| -> Result<(T, T, T)> {
                let base = lp_norm0(self, f, p);
                let scale = max_abs(f);
                let (mut fw, mut inv, mut pair) = (T::zero(), T::zero(), T::zero());
                for m in 0..self.len() {
                    let a = self.iota_star(m, f)?;
                    let b = self.iota_star_inverse(m, f)?;
                    fw = fw.max(lp_norm0(self, &a, p) / base);
                    inv = inv.max(lp_norm0(self, &b, p) / base);
                    let back = self.iota_star_inverse(m, &self.project_zero_mean(&a))?;
                    pair = pair.max(max_abs(&sub(&back, f)) / scale);
                }
                Ok((fw, inv, pair))
            })
            .collect::<Result<Vec<_>>>()?;
        let fold = |k: usize| {
            rows.iter().fold(T::zero(), |a, r| a.max(match k {
                0 => r.0,
                1 => r.1,
                _ => r.2,
            }))
        };
        Ok(LpBoundReport {
            p: to_f64(p),
            forward: to_f64(fold(0)),
            inverse: to_f64(fold(1)),
            inverse_pair_residual: to_f64(fold(2)),
            samples,
        })
    }

    /// `max |(f, Phi g)_0 - (Phi f, g)_0|` relative to `|f|_0 |g|_0 max|Phi|`.
    pub fn phi_self_adjointness(&self, m: usize, pairs: &[(Vec<T>, Vec<T>)]) -> Result<T> {
        let mut worst = T::zero();
        for (f, g) in pairs {
            let pg = self.phi_apply(m, g)?;
            let pf = self.phi_apply(m, f)?;
            let a = self.inner0(f, &self.project_zero_mean(&pg))?;
            let b = self.inner0(&self.project_zero_mean(&pf), g)?;
            let scale = (self.hminus_inner(0, f, f)? * self.hminus_inner(0, g, g)?).sqrt();
            worst = worst.max((a - b).abs() / scale.max(T::min_positive_value()));
        }
        Ok(worst)
    }

    /// Residual of
    /// `(iota*_{-t} x, y)_0 = (x, y)_0 - int_0^t (iota*_{-s} Phi(s) iota*_{-s} x, y)_0 ds`
    /// at every node (trapezoid rule in `s`); returns the residual per node.
    pub fn inverse_identity_residuals(&self, x: &[T], y: &[T]) -> Result<Vec<T>> {
        let integrand: Vec<T> = (0..self.len())
            .map(|m| {
                let a = self.iota_star_inverse(m, x)?;
                let b = self.project_zero_mean(&self.phi_apply(m, &a)?);
                let c = self.iota_star_inverse(m, &b)?;
                self.inner0(&self.project_zero_mean(&c), y)
            })
            .collect::<Result<_>>()?;
        let base = self.inner0(x, y)?;
        (0..self.len())
            .map(|m| {
                let lhs = self.inner0(&self.project_zero_mean(&self.iota_star_inverse(m, x)?), y)?;
                Ok((lhs - base + self.trapezoid(&integrand, m)).abs())
            })
            .collect()
    }

    /// `|iota*_t x - x - int_0^t Phi(s) x ds|_0` at every node.
    pub fn iota_integral_residuals(&self, x: &[T]) -> Result<Vec<T>> {
        let phis: Vec<Vec<T>> = (0..self.len()).map(|m| self.phi_apply(m, x)).collect::<Result<_>>()?;
        let n = self.n_grid();
        (0..self.len())
            .map(|m| {
                let a = self.iota_star(m, x)?;
                let r: Vec<T> = (0..n)
                    .map(|j| {
                        let vals: Vec<T> = phis.iter().map(|p| p[j]).collect();
                        a[j] - x[j] - self.trapezoid(&vals, m)
                    })
                    .collect();
                self.hminus_norm(0, &self.project_zero_mean(&r))
            })
            .collect()
    }
}
