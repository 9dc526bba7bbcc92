//! Stefan / porous-media drift on the moving curve, noise coefficients and
//! numerical verification of the structural assumptions (continuity,
//! monotonicity, coercivity, growth) they rely on.

use crate::error::{Error, Result};
use crate::linalg::max_abs;
use crate::scalar::{from_usize, lit, to_f64, Real};
use crate::spaces::{lp_norm0, random_zero_mean, GramPath};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Scalar constitutive law `Psi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Nonlinearity<T> {
    /// `a r` for `r < 0`, `0` on `[0, rho]`, `b (r - rho)` for `r > rho`.
    Stefan { a: T, b: T, rho: T },
    /// `|s|^{p-2} s`
    PorousMedia { p: T },
    /// `s`
    LinearHeat,
    /// `0`: no drift, for isolating the geometric and noise terms.
    Zero,
}

impl<T: Real> Nonlinearity<T> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Nonlinearity::Stefan { a, b, rho } => {
                if !(a > T::zero() && b > T::zero() && rho >= T::zero()) {
                    return Err(Error::InvalidModel("Stefan law needs a > 0, b > 0, rho >= 0".into()));
                }
            }
            Nonlinearity::PorousMedia { p } => {
                if !(p >= T::one()) {
                    return Err(Error::InvalidModel(format!("porous-media exponent p = {p} is below 1")));
                }
            }
            Nonlinearity::LinearHeat | Nonlinearity::Zero => {}
        }
        Ok(())
    }

    #[inline]
    pub fn psi(&self, s: T) -> T {
        match *self {
            Nonlinearity::Stefan { a, b, rho } => {
                if s < T::zero() {
                    a * s
                } else if s <= rho {
                    T::zero()
                } else {
                    b * (s - rho)
                }
            }
            Nonlinearity::PorousMedia { p } => {
                if s == T::zero() {
                    T::zero()
                } else {
                    s.abs().powf(p - lit(2.0)) * s
                }
            }
            Nonlinearity::LinearHeat => s,
            Nonlinearity::Zero => T::zero(),
        }
    }

    /// Growth exponent `p` of the reflexive space `L^p`.
    pub fn growth_exponent(&self) -> T {
        match *self {
            Nonlinearity::PorousMedia { p } => p,
            _ => lit(2.0),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Nonlinearity::Stefan { a, b, rho } => format!("stefan(a={a}, b={b}, rho={rho})"),
            Nonlinearity::PorousMedia { p } => format!("porous_media(p={p})"),
            Nonlinearity::LinearHeat => "linear_heat".into(),
            Nonlinearity::Zero => "zero".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// `sigma_k = gamma_k phi_k`
    Additive,
    /// `sigma_k(t, u) = gamma_k (u, phi_k)_t / |phi_k|_t^2 phi_k`
    LinearMultiplicative,
}

/// Diagonal noise: mode `k` is driven by its own Brownian motion.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel<T> {
    pub amplitudes: Vec<T>,
    pub coupling: Coupling,
    /// Constant `f` in the Lipschitz and linear-growth bounds of the noise.
    pub f_bound: T,
}

impl<T: Real> NoiseModel<T> {
    pub fn none() -> Self {
        Self { amplitudes: Vec::new(), coupling: Coupling::Additive, f_bound: T::zero() }
    }

    /// `gamma_k = gamma0 k^{-decay}`, `k = 1..=modes`, with `f = sum gamma_k^2`.
    pub fn power_law(gamma0: T, decay: T, modes: usize, coupling: Coupling) -> Self {
        let amplitudes: Vec<T> = (1..=modes).map(|k| gamma0 * from_usize::<T>(k).powf(-decay)).collect();
        let f_bound = amplitudes.iter().map(|&g| g * g).sum();
        Self { amplitudes, coupling, f_bound }
    }

    /// Multiplies the bound constant, e.g. by `c1^2` so that additive noise
    /// measured in the moving norm stays within it.
    pub fn with_f_scale(mut self, scale: T) -> Self {
        self.f_bound = self.f_bound * scale;
        self
    }

    pub fn modes(&self) -> usize {
        self.amplitudes.len()
    }

    /// Sets `f` to the smallest constant valid at every node of `gram` for
    /// noise built on `seed`.
    ///
    /// Multiplicative coupling satisfies `|sigma_k(u)|_t <= gamma_k |u|_t` by
    /// Cauchy-Schwarz, so `f = sum gamma_k^2`. Additive fields do not scale
    /// with `u`, so `f = sum gamma_k^2 max_m |phi_k|_{t_m}^2`.
    pub fn calibrated(mut self, gram: &GramPath<T>, seed: &[Vec<T>]) -> Result<Self> {
        if seed.len() < self.modes() {
            return Err(Error::Dimension { expected: self.modes(), got: seed.len() });
        }
        self.f_bound = match self.coupling {
            Coupling::LinearMultiplicative => self.amplitudes.iter().map(|&g| g * g).sum(),
            Coupling::Additive => {
                let mut f = T::zero();
                for (&g, phi) in self.amplitudes.iter().zip(seed) {
                    let mut worst = T::zero();
                    for m in 0..gram.len() {
                        worst = worst.max(gram.hminus_inner(m, phi, phi)?);
                    }
                    f = f + g * g * worst;
                }
                f
            }
        };
        Ok(self)
    }
}

/// Drift law plus noise.
#[derive(Debug, Clone, PartialEq)]
pub struct StefanModel<T> {
    pub nonlinearity: Nonlinearity<T>,
    pub noise: NoiseModel<T>,
}

impl<T: Real> StefanModel<T> {
    pub fn new(nonlinearity: Nonlinearity<T>, noise: NoiseModel<T>) -> Result<Self> {
        nonlinearity.validate()?;
        if noise.amplitudes.iter().any(|g| !g.is_finite() || *g < T::zero()) {
            return Err(Error::InvalidModel("noise amplitudes must be finite and non-negative".into()));
        }
        if !(noise.f_bound >= T::zero()) {
            return Err(Error::InvalidModel("noise bound must be non-negative".into()));
        }
        Ok(Self { nonlinearity, noise })
    }

    pub fn growth_exponent(&self) -> T {
        self.nonlinearity.growth_exponent()
    }
}

/// `Psi(u / rn)` at the nodes of slice `m`.
pub fn psi_field<T: Real>(gram: &GramPath<T>, model: &StefanModel<T>, m: usize, u: &[T]) -> Result<Vec<T>> {
    let grid = gram.grid(m)?;
    Ok(u.iter().zip(&grid.rn_derivative).map(|(&x, &r)| model.nonlinearity.psi(x / r)).collect())
}

/// Pairing `<A~(t, u), v> = -int_{Gamma_0} Psi(u dvol_g / dvol_{g^t}) v dvol_g`.
pub fn drift_pairing<T: Real>(gram: &GramPath<T>, model: &StefanModel<T>, m: usize, u: &[T], v: &[T]) -> Result<T> {
    let psi = psi_field(gram, model, m, u)?;
    Ok(-gram.mass0().iter().zip(&psi).zip(v).map(|((&w, &p), &x)| w * p * x).sum::<T>())
}

/// Representative of `A~(t, u)` in the pivot space: `-M^{-1} S(0) Psi(u / rn)`.
pub fn drift_tilde<T: Real>(gram: &GramPath<T>, model: &StefanModel<T>, m: usize, u: &[T]) -> Result<Vec<T>> {
    let psi = psi_field(gram, model, m, u)?;
    let r = gram.riesz_map(0, &psi)?;
    Ok(r.iter().map(|&x| -x).collect())
}

/// `A(t, u) = iota*_{-t} A~(t, u)`.
pub fn drift<T: Real>(gram: &GramPath<T>, model: &StefanModel<T>, m: usize, u: &[T]) -> Result<Vec<T>> {
    let a = drift_tilde(gram, model, m, u)?;
    gram.iota_star_inverse(m, &gram.project_zero_mean(&a))
}

/// Noise fields `sigma_k(t, u)`, `k = 1..=K`, built on the seed basis `phi`.
pub fn noise_fields<T: Real>(
    gram: &GramPath<T>,
    seed: &[Vec<T>],
    model: &StefanModel<T>,
    m: usize,
    u: &[T],
) -> Result<Vec<Vec<T>>> {
    let k = model.noise.modes();
    if seed.len() < k {
        return Err(Error::Dimension { expected: k, got: seed.len() });
    }
    model
        .noise
        .amplitudes
        .iter()
        .zip(seed)
        .map(|(&gamma, phi)| {
            let factor = match model.noise.coupling {
                Coupling::Additive => gamma,
                Coupling::LinearMultiplicative => {
                    gamma * gram.hminus_inner(m, u, phi)? / gram.hminus_inner(m, phi, phi)?
                }
            };
            Ok(phi.iter().map(|&x| factor * x).collect())
        })
        .collect()
}

/// Outcome of one structural check.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub condition: &'static str,
    pub pass: bool,
    /// The quantity the check is decided on (see `detail`).
    pub measured: f64,
    pub detail: String,
}

/// Scalar checks on `Psi` over log-spaced samples in `[-1e4, 1e4]`.
#[derive(Debug, Clone, Serialize)]
pub struct PsiReport {
    pub p: f64,
    pub continuity: bool,
    pub monotone: bool,
    pub coercive: bool,
    pub growth: bool,
    /// Largest ratio of jumps across two nested stencils (continuous laws give `< 1/2`).
    pub max_jump_ratio: f64,
    pub min_increment: f64,
    /// Fitted constants: `s Psi(s) >= a |s|^p - c4`, `|Psi(s)| <= c5 + c6 |s|^{p-1}`.
    pub a: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub witness: Option<String>,
}

impl PsiReport {
    pub fn pass(&self) -> bool {
        self.continuity && self.monotone && self.coercive && self.growth
    }
}

fn log_samples<T: Real>(count: usize) -> Vec<T> {
    let half = (count / 2).max(2);
    let mut s = vec![T::zero()];
    for i in 0..half {
        let e = lit::<T>(-4.0) + lit::<T>(8.0) * from_usize::<T>(i) / from_usize::<T>(half - 1);
        let v = lit::<T>(10.0).powf(e);
        s.push(v);
        s.push(-v);
    }
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    s
}

/// Checks continuity, monotonicity, coercivity and growth of `psi` with
/// exponent `p`, fitting the smallest constants consistent with the samples.
pub fn check_psi_conditions<T: Real>(psi: impl Fn(T) -> T, p: T, sample_count: usize) -> PsiReport {
    let s = log_samples::<T>(sample_count);
    let tiny = lit::<T>(1e-12);
    let mut witness = None;

    let mut max_jump_ratio = T::zero();
    let mut continuity = true;
    for &x in &s {
        let d1 = lit::<T>(1e-6) * (T::one() + x.abs());
        let d2 = d1 / lit(16.0);
        let j1 = (psi(x + d1) - psi(x - d1)).abs();
        let j2 = (psi(x + d2) - psi(x - d2)).abs();
        let floor = tiny * (T::one() + psi(x).abs());
        if j2 > floor {
            let ratio = j2 / j1.max(T::min_positive_value());
            max_jump_ratio = max_jump_ratio.max(ratio);
            if ratio > lit(0.5) {
                continuity = false;
                witness.get_or_insert_with(|| format!("jump {} persists at s = {x}", to_f64(j2)));
            }
        }
    }

    let values: Vec<T> = s.iter().map(|&x| psi(x)).collect();
    let mut min_increment = T::infinity();
    let mut monotone = true;
    for i in 0..s.len() - 1 {
        let inc = values[i + 1] - values[i];
        min_increment = min_increment.min(inc);
        if inc < T::zero() {
            monotone = false;
            witness.get_or_insert_with(|| {
                format!("Psi({}) = {} > Psi({}) = {}", s[i], values[i], s[i + 1], values[i + 1])
            });
        }
    }

    let tail: Vec<usize> = (0..s.len()).filter(|&i| s[i].abs() >= lit(1e3)).collect();
    let a = tail
        .iter()
        .map(|&i| s[i] * values[i] / s[i].abs().powf(p))
        .fold(T::infinity(), T::min);
    let coercive = a > T::zero() && a.is_finite();
    let mut c4 = T::zero();
    for (i, &x) in s.iter().enumerate() {
        let target = a * x.abs().powf(p);
        let gap = target - x * values[i];
        if gap > tiny * target.abs() {
            c4 = c4.max(gap);
        }
    }
    if !coercive {
        witness.get_or_insert_with(|| format!("s Psi(s) / |s|^p has non-positive tail infimum {a}"));
    }

    let c6 = tail
        .iter()
        .map(|&i| values[i].abs() / s[i].abs().powf(p - T::one()))
        .fold(T::zero(), T::max);
    let mut c5 = T::zero();
    for (i, &x) in s.iter().enumerate() {
        let bound = c6 * x.abs().powf(p - T::one());
        let gap = values[i].abs() - bound;
        if gap > tiny * bound.abs() {
            c5 = c5.max(gap);
        }
    }
    let growth = c5.is_finite() && c6.is_finite();

    PsiReport {
        p: to_f64(p),
        continuity,
        monotone,
        coercive,
        growth,
        max_jump_ratio: to_f64(max_jump_ratio),
        min_increment: to_f64(min_increment),
        a: to_f64(a),
        c4: to_f64(c4),
        c5: to_f64(c5),
        c6: to_f64(c6),
        witness,
    }
}

/// [`check_psi_conditions`] for a model law.
pub fn check_model_psi<T: Real>(law: &Nonlinearity<T>, sample_count: usize) -> PsiReport {
    check_psi_conditions(|s| law.psi(s), law.growth_exponent(), sample_count)
}

/// Random element of `V` with log-uniform amplitude in `[0.1, 10]`.
fn sample_field<T: Real, R: Rng + ?Sized>(gram: &GramPath<T>, rng: &mut R) -> Vec<T> {
    let f = random_zero_mean(gram, rng, Some(8));
    let scale = lit::<T>(10f64.powf(rng.random_range(-1.0..1.0))) / max_abs(&f);
    f.iter().map(|&x| x * scale).collect()
}

fn noise_energy<T: Real>(gram: &GramPath<T>, m: usize, fields: &[Vec<T>]) -> Result<T> {
    fields.iter().map(|s| gram.hminus_inner(m, s, s)).sum()
}

/// Structural checks of the drift/noise pair at the nodes `ms` of `gram`.
///
/// Returned in order: hemicontinuity, monotone pairing, full monotonicity,
/// coercivity, growth, noise growth.
pub fn verify_conditions<T: Real, R: Rng + ?Sized>(
    gram: &GramPath<T>,
    seed: &[Vec<T>],
    model: &StefanModel<T>,
    ms: &[usize],
    samples: usize,
    rng: &mut R,
) -> Result<Vec<ConditionReport>> {
    let p = model.growth_exponent();
    let f = model.noise.f_bound;
    let rel = lit::<T>(1e-12);

    // Hemicontinuity: adjacent jumps of lambda -> <A(u + lambda v), iota* x>
    // must shrink under dyadic refinement of lambda in [-1, 1].
    let mut hemi_ratio = T::zero();
    let mut hemi_pass = true;
    for &m in ms {
        for _ in 0..samples.min(20) {
            let (u, v, x) = (sample_field(gram, rng), sample_field(gram, rng), sample_field(gram, rng));
            let mut jumps = Vec::new();
            for level in [5usize, 6, 7] {
                let pts = 1usize << level;
                let vals: Vec<T> = (0..=pts)
                    .map(|i| {
                        let lam = -T::one() + lit::<T>(2.0) * from_usize::<T>(i) / from_usize::<T>(pts);
                        let w: Vec<T> = u.iter().zip(&v).map(|(&a, &b)| a + lam * b).collect();
                        drift_pairing(gram, model, m, &w, &x)
                    })
                    .collect::<Result<_>>()?;
                let jump = vals.windows(2).map(|w| (w[1] - w[0]).abs()).fold(T::zero(), T::max);
                jumps.push(jump);
            }
            let scale = jumps[0].max(T::min_positive_value());
            for w in jumps.windows(2) {
                if w[0] > rel * scale {
                    let r = w[1] / w[0];
                    hemi_ratio = hemi_ratio.max(r);
                    if r > lit(0.75) {
                        hemi_pass = false;
                    }
                }
            }
        }
    }

    let mut mono_max = -T::infinity();
    let mut full_excess = -T::infinity();
    let mut coercive_c = T::infinity();
    let mut growth_c = T::zero();
    let mut noise_ratio = T::zero();
    let q = p / (p - T::one());
    let dictionary = dual_dictionary(gram, p);
    for &m in ms {
        for _ in 0..samples {
            let u = sample_field(gram, rng);
            let v = sample_field(gram, rng);
            let psi_u = psi_field(gram, model, m, &u)?;
            let psi_v = psi_field(gram, model, m, &v)?;
            // Termwise so each product keeps its sign exactly.
            let mono = lit::<T>(2.0)
                * gram
                    .mass0()
                    .iter()
                    .zip(psi_u.iter().zip(&psi_v))
                    .zip(u.iter().zip(&v))
                    .map(|((&w, (&a, &b)), (&x, &y))| -(w * (a - b) * (x - y)))
                    .sum::<T>();
            mono_max = mono_max.max(mono);

            let diff: Vec<T> = u.iter().zip(&v).map(|(&a, &b)| a - b).collect();
            let su = noise_fields(gram, seed, model, m, &u)?;
            let sv = noise_fields(gram, seed, model, m, &v)?;
            let dnoise: Vec<Vec<T>> =
                su.iter().zip(&sv).map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| x - y).collect()).collect();
            let diff_t = gram.hminus_inner(m, &diff, &diff)?;
            let lhs = mono + noise_energy(gram, m, &dnoise)?;
            full_excess = full_excess.max((lhs - f * diff_t) / diff_t.max(T::min_positive_value()));

            let u_t = gram.hminus_inner(m, &u, &u)?;
            let pair = drift_pairing(gram, model, m, &u, &u)?;
            let noise_u = noise_energy(gram, m, &su)?;
            let vnorm = lp_norm0(gram, &u, p);
            let c = (f * (T::one() + u_t) - lit::<T>(2.0) * pair - noise_u) / vnorm.powf(p);
            coercive_c = coercive_c.min(c);
            noise_ratio = noise_ratio.max(noise_u / (T::one() + u_t));

            let dual = dictionary
                .iter()
                .chain(std::iter::once(&holder_extremal(gram, &psi_u, p)))
                .map(|d| -> Result<T> { Ok(drift_pairing(gram, model, m, &u, d)?.abs()) })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(T::zero(), T::max);
            let c = (dual.powf(q) - f) / vnorm.powf(p);
            growth_c = growth_c.max(c);
        }
    }

    Ok(vec![
        ConditionReport {
            condition: "hemicontinuity",
            pass: hemi_pass,
            measured: to_f64(hemi_ratio),
            detail: "largest ratio of successive jump maxima under dyadic refinement (must be <= 0.75)".into(),
        },
        ConditionReport {
            condition: "monotone_pairing",
            pass: mono_max <= lit(1e-12),
            measured: to_f64(mono_max),
            detail: "max of 2<A(u) - A(v), iota*(u - v)> over sampled pairs (must be <= 1e-12)".into(),
        },
        ConditionReport {
            condition: "monotonicity",
            pass: full_excess <= lit(1e-10),
            measured: to_f64(full_excess),
            detail: "max of (monotone pairing + noise increment - f |u - v|_t^2) / |u - v|_t^2".into(),
        },
        ConditionReport {
            condition: "coercivity",
            pass: coercive_c > T::zero(),
            measured: to_f64(coercive_c),
            detail: "largest c with 2<A(u), iota* u> + |sigma(u)|^2 <= f(1 + |u|_t^2) - c ||u||_V^p".into(),
        },
        ConditionReport {
            condition: "growth",
            pass: growth_c.is_finite(),
            measured: to_f64(growth_c),
            detail: "fitted C in ||iota* A(u)||_{V*}^{p/(p-1)} <= f + C ||u||_V^p (dual norm is a dictionary lower bound)"
                .into(),
        },
        ConditionReport {
            condition: "noise_growth",
            pass: noise_ratio <= f * (T::one() + rel),
            measured: to_f64(noise_ratio),
            detail: format!("max of |sigma(u)|_t^2 / (1 + |u|_t^2), bound f = {}", to_f64(f)),
        },
    ])
}

/// Unit-`L^p` zero-mean Fourier modes used to bound dual norms from below.
fn dual_dictionary<T: Real>(gram: &GramPath<T>, p: T) -> Vec<Vec<T>> {
    let theta = gram.nodes().theta();
    let k_max = (gram.nodes().max_exact_mode()).min(31);
    let mut out = Vec::new();
    for k in 1..=k_max {
        let kf: T = from_usize(k);
        for phase in 0..2 {
            let f: Vec<T> = theta.iter().map(|&t| if phase == 0 { (kf * t).cos() } else { (kf * t).sin() }).collect();
            let f = gram.project_zero_mean(&f);
            let norm = lp_norm0(gram, &f, p);
            out.push(f.iter().map(|&x| x / norm).collect());
        }
    }
    out
}

/// Zero-mean projection of the Holder extremal `|psi|^{q-1} sign(psi)`, normalized in `L^p`.
fn holder_extremal<T: Real>(gram: &GramPath<T>, psi: &[T], p: T) -> Vec<T> {
    let q = p / (p - T::one());
    let raw: Vec<T> = psi.iter().map(|&x| x.abs().powf(q - T::one()) * x.signum()).collect();
    let f = gram.project_zero_mean(&raw);
    let norm = lp_norm0(gram, &f, p).max(T::min_positive_value());
    f.iter().map(|&x| x / norm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stefan_law_values() {
        let law = Nonlinearity::Stefan { a: 1.0, b: 1.0, rho: 1.0 };
        assert_eq!(law.psi(-2.0), -2.0);
        assert_eq!(law.psi(0.5), 0.0);
        assert_eq!(law.psi(3.0), 2.0);
    }

    #[test]
    fn porous_media_rejects_small_exponent() {
        let law = Nonlinearity::PorousMedia { p: 0.5 };
        assert!(StefanModel::new(law, NoiseModel::none()).is_err());
    }

    #[test]
    fn decreasing_law_fails_monotonicity_with_witness() {
        let r = check_psi_conditions(|s: f64| -s, 2.0, 200);
        assert!(!r.monotone);
        assert!(r.witness.is_some());
    }

    #[test]
    fn sign_function_fails_continuity() {
        let r = check_psi_conditions(|s: f64| s.signum() + s, 2.0, 200);
        assert!(!r.continuity);
    }
}
