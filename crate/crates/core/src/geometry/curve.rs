//! Moving closed curves `t -> G(t, X(theta))` with analytic derivatives.

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// A closed planar curve carried by a flow.
///
/// `position(t, theta)` is the composite `G(t, X(theta))`, so the reference
/// chart is `position(0, .)` and `G(0, .)` is the identity by construction.
/// The time derivatives default to central differences with step
/// [`MovingCurve::fd_step`]; families override them with closed forms.
pub trait MovingCurve<T: Real>: Send + Sync {
    fn name(&self) -> &str;

    /// Final time `T` of the flow.
    fn horizon(&self) -> T;

    fn position(&self, t: T, theta: T) -> [T; 2];

    /// `d/dtheta` of the position.
    fn d_theta(&self, t: T, theta: T) -> [T; 2];

    /// Surface velocity `v = d/dt G(t, X(theta))`.
    fn d_t(&self, t: T, theta: T) -> [T; 2] {
        let h = self.fd_step();
        central(|s| self.position(s, theta), t, h)
    }

    /// Mixed derivative `d^2/(dt dtheta)` of the position.
    fn d_t_theta(&self, t: T, theta: T) -> [T; 2] {
        let h = self.fd_step();
        central(|s| self.d_theta(s, theta), t, h)
    }

    /// Step used by finite differences in time.
    fn fd_step(&self) -> T {
        lit(1e-5)
    }

    fn reference_chart(&self, theta: T) -> [T; 2] {
        self.position(T::zero(), theta)
    }
}

fn central<T: Real>(f: impl Fn(T) -> [T; 2], t: T, h: T) -> [T; 2] {
    let a = f(t + h);
    let b = f(t - h);
    let two_h = h + h;
    [(a[0] - b[0]) / two_h, (a[1] - b[1]) / two_h]
}

/// Time profile of a uniform dilation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DilationProfile {
    /// `R(t) = R0 (1 + rate t)`
    #[default]
    Linear,
    /// `R(t) = R0 exp(rate t)`
    Exponential,
}

/// Circle of radius `R(t)` centred at the origin.
#[derive(Debug, Clone)]
pub struct DilatingCircle<T> {
    pub r0: T,
    pub rate: T,
    pub profile: DilationProfile,
    pub horizon: T,
}

impl<T: Real> DilatingCircle<T> {
    pub fn new(r0: T, rate: T, profile: DilationProfile, horizon: T) -> Result<Self> {
        let c = Self { r0, rate, profile, horizon };
        if !(r0 > T::zero()) || !(horizon > T::zero()) {
            return Err(Error::InvalidParameter("dilating_circle needs R0 > 0 and horizon > 0".into()));
        }
        if c.radius(horizon) <= T::zero() || c.radius(T::zero()) <= T::zero() {
            return Err(Error::InvalidParameter("dilating_circle radius must stay positive".into()));
        }
        Ok(c)
    }

    /// A circle that does not move.
    pub fn fixed(r0: T, horizon: T) -> Result<Self> {
        Self::new(r0, T::zero(), DilationProfile::Linear, horizon)
    }

    pub fn radius(&self, t: T) -> T {
        match self.profile {
            DilationProfile::Linear => self.r0 * (T::one() + self.rate * t),
            DilationProfile::Exponential => self.r0 * (self.rate * t).exp(),
        }
    }

    pub fn radius_rate(&self, t: T) -> T {
        match self.profile {
            DilationProfile::Linear => self.r0 * self.rate,
            DilationProfile::Exponential => self.rate * self.radius(t),
        }
    }
}

impl<T: Real> MovingCurve<T> for DilatingCircle<T> {
    fn name(&self) -> &str {
        "dilating_circle"
    }
    fn horizon(&self) -> T {
        self.horizon
    }
    fn position(&self, t: T, theta: T) -> [T; 2] {
        let r = self.radius(t);
        [r * theta.cos(), r * theta.sin()]
    }
    fn d_theta(&self, t: T, theta: T) -> [T; 2] {
        let r = self.radius(t);
        [-r * theta.sin(), r * theta.cos()]
    }
    fn d_t(&self, t: T, theta: T) -> [T; 2] {
        let r = self.radius_rate(t);
        [r * theta.cos(), r * theta.sin()]
    }
    fn d_t_theta(&self, t: T, theta: T) -> [T; 2] {
        let r = self.radius_rate(t);
        [-r * theta.sin(), r * theta.cos()]
    }
}

/// Ellipse whose semi-axes oscillate in antiphase:
/// `a(t) = a0 (1 + A sin(w t))`, `b(t) = b0 (1 - A sin(w t))`.
#[derive(Debug, Clone)]
pub struct OscillatingEllipse<T> {
    pub a0: T,
    pub b0: T,
    pub amplitude: T,
    pub frequency: T,
    pub horizon: T,
}

impl<T: Real> OscillatingEllipse<T> {
    pub fn new(a0: T, b0: T, amplitude: T, frequency: T, horizon: T) -> Result<Self> {
        if !(a0 > T::zero() && b0 > T::zero()) {
            return Err(Error::InvalidParameter("oscillating_ellipse needs a0, b0 > 0".into()));
        }
        if !(amplitude.abs() < T::one()) {
            return Err(Error::InvalidParameter("oscillating_ellipse needs |amplitude| < 1".into()));
        }
        if !(horizon > T::zero()) {
            return Err(Error::InvalidParameter("horizon must be positive".into()));
        }
        Ok(Self { a0, b0, amplitude, frequency, horizon })
    }

    fn axes(&self, t: T) -> (T, T, T, T) {
        let s = (self.frequency * t).sin();
        let c = (self.frequency * t).cos();
        let a = self.a0 * (T::one() + self.amplitude * s);
        let b = self.b0 * (T::one() - self.amplitude * s);
        let da = self.a0 * self.amplitude * self.frequency * c;
        let db = -self.b0 * self.amplitude * self.frequency * c;
        (a, b, da, db)
    }
}

impl<T: Real> MovingCurve<T> for OscillatingEllipse<T> {
    fn name(&self) -> &str {
        "oscillating_ellipse"
    }
    fn horizon(&self) -> T {
        self.horizon
    }
    fn position(&self, t: T, theta: T) -> [T; 2] {
        let (a, b, _, _) = self.axes(t);
        [a * theta.cos(), b * theta.sin()]
    }
    fn d_theta(&self, t: T, theta: T) -> [T; 2] {
        let (a, b, _, _) = self.axes(t);
        [-a * theta.sin(), b * theta.cos()]
    }
    fn d_t(&self, t: T, theta: T) -> [T; 2] {
        let (_, _, da, db) = self.axes(t);
        [da * theta.cos(), db * theta.sin()]
    }
    fn d_t_theta(&self, t: T, theta: T) -> [T; 2] {
        let (_, _, da, db) = self.axes(t);
        [-da * theta.sin(), db * theta.cos()]
    }
}

/// One wavenumber of a [`CustomFourier`] curve. Each coefficient is affine in
/// time, stored as `[value at t = 0, rate]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FourierTerm<T> {
    pub k: u32,
    pub x_cos: [T; 2],
    pub x_sin: [T; 2],
    pub y_cos: [T; 2],
    pub y_sin: [T; 2],
}

/// Curve given by a finite Fourier table with time-affine coefficients.
#[derive(Debug, Clone)]
pub struct CustomFourier<T> {
    pub terms: Vec<FourierTerm<T>>,
    pub horizon: T,
}

impl<T: Real> CustomFourier<T> {
    pub fn new(terms: Vec<FourierTerm<T>>, horizon: T) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidParameter("custom_fourier needs at least one term".into()));
        }
        if !(horizon > T::zero()) {
            return Err(Error::InvalidParameter("horizon must be positive".into()));
        }
        Ok(Self { terms, horizon })
    }

    fn eval(&self, t: T, theta: T, dt: bool, dth: bool) -> [T; 2] {
        let coef = |c: [T; 2]| if dt { c[1] } else { c[0] + c[1] * t };
        let mut out = [T::zero(); 2];
        for term in &self.terms {
            let k = T::from_u32(term.k).expect("wavenumber");
            let (s, c) = (k * theta).sin_cos();
            let (cos_part, sin_part) = if dth { (-k * s, k * c) } else { (c, s) };
            out[0] = out[0] + coef(term.x_cos) * cos_part + coef(term.x_sin) * sin_part;
            out[1] = out[1] + coef(term.y_cos) * cos_part + coef(term.y_sin) * sin_part;
        }
        out
    }
}

impl<T: Real> MovingCurve<T> for CustomFourier<T> {
    fn name(&self) -> &str {
        "custom_fourier"
    }
    fn horizon(&self) -> T {
        self.horizon
    }
    fn position(&self, t: T, theta: T) -> [T; 2] {
        self.eval(t, theta, false, false)
    }
    fn d_theta(&self, t: T, theta: T) -> [T; 2] {
        self.eval(t, theta, false, true)
    }
    fn d_t(&self, t: T, theta: T) -> [T; 2] {
        self.eval(t, theta, true, false)
    }
    fn d_t_theta(&self, t: T, theta: T) -> [T; 2] {
        self.eval(t, theta, true, true)
    }
}

/// The curve `Gamma_{t0}` of another family, held fixed in time and used as
/// its own reference configuration.
pub struct FrozenCurve<T> {
    inner: Arc<dyn MovingCurve<T>>,
    t0: T,
}

impl<T: Real> FrozenCurve<T> {
    pub fn new(inner: Arc<dyn MovingCurve<T>>, t0: T) -> Self {
        Self { inner, t0 }
    }
}

impl<T: Real> MovingCurve<T> for FrozenCurve<T> {
    fn name(&self) -> &str {
        "frozen"
    }
    fn horizon(&self) -> T {
        self.inner.horizon()
    }
    fn position(&self, _t: T, theta: T) -> [T; 2] {
        self.inner.position(self.t0, theta)
    }
    fn d_theta(&self, _t: T, theta: T) -> [T; 2] {
        self.inner.d_theta(self.t0, theta)
    }
    fn d_t(&self, _t: T, _theta: T) -> [T; 2] {
        [T::zero(); 2]
    }
    fn d_t_theta(&self, _t: T, _theta: T) -> [T; 2] {
        [T::zero(); 2]
    }
}

/// Checks periodicity and immersion of `curve` on `n` nodes at `samples`
/// equally spaced times in `[0, T]`.
pub fn validate_curve<T: Real>(curve: &dyn MovingCurve<T>, n: usize, samples: usize) -> Result<()> {
    let two_pi = T::PI() + T::PI();
    let horizon = curve.horizon();
    let samples = samples.max(2);
    for s in 0..samples {
        let t = horizon * crate::scalar::from_usize::<T>(s) / crate::scalar::from_usize::<T>(samples - 1);
        let p0 = curve.position(t, T::zero());
        let p1 = curve.position(t, two_pi);
        let scale = T::one().max(p0[0].abs()).max(p0[1].abs());
        let gap = (p0[0] - p1[0]).abs().max((p0[1] - p1[1]).abs());
        if gap > lit::<T>(1e-10) * scale {
            return Err(Error::NotPeriodic { gap: to_f64(gap) });
        }
        for j in 0..n {
            let theta = two_pi * crate::scalar::from_usize::<T>(j) / crate::scalar::from_usize::<T>(n);
            let d = curve.d_theta(t, theta);
            let g11 = d[0] * d[0] + d[1] * d[1];
            if g11 < lit(super::DEGENERATE_METRIC) {
                return Err(Error::GeometryDegenerate { node: j, g11: to_f64(g11), t: to_f64(t) });
            }
        }
    }
    Ok(())
}
