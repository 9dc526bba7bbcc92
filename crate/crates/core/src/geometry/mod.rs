//! Sampled geometry of a moving closed curve: metric, velocity, spectral
//! tangential calculus, periodic-trapezoid quadrature, weak Laplace-Beltrami
//! stiffness and lumped mass.

mod curve;
mod spectral;

pub use curve::{
    validate_curve, CustomFourier, DilatingCircle, DilationProfile, FourierTerm, FrozenCurve, MovingCurve,
    OscillatingEllipse,
};
pub use spectral::{assemble_stiffness, PeriodicNodes};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, Matrix};
use crate::scalar::{lit, to_f64, Real};
use serde::Serialize;
use std::sync::Arc;

/// Metric entries below this value are treated as a degenerate immersion.
pub const DEGENERATE_METRIC: f64 = 1e-10;

/// Default time step for finite differences of geometric quantities.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// The curve `Gamma_t` sampled on the periodic nodes.
#[derive(Debug, Clone)]
pub struct SurfaceGrid<T> {
    nodes: Arc<PeriodicNodes<T>>,
    pub t: T,
    pub position: Vec<[T; 2]>,
    /// `d/dtheta` of the position.
    pub tangent: Vec<[T; 2]>,
    /// `d^2/(dt dtheta)` of the position.
    pub tangent_rate: Vec<[T; 2]>,
    pub velocity: Vec<[T; 2]>,
    pub g11: Vec<T>,
    pub sqrt_g: Vec<T>,
    /// Density of `dvol_{g^t}` against `dvol_g`, i.e. `sqrt(g^t / g^0)`.
    pub rn_derivative: Vec<T>,
}

impl<T: Real> SurfaceGrid<T> {
    pub fn build(curve: &dyn MovingCurve<T>, nodes: Arc<PeriodicNodes<T>>, t: T) -> Result<Self> {
        let horizon = curve.horizon();
        let slack = lit::<T>(1e-12) * T::one().max(horizon);
        if t < -slack || t > horizon + slack {
            return Err(Error::TimeOutOfRange { t: to_f64(t), horizon: to_f64(horizon) });
        }
        let n = nodes.len();
        let mut grid = Self {
            nodes: nodes.clone(),
            t,
            position: Vec::with_capacity(n),
            tangent: Vec::with_capacity(n),
            tangent_rate: Vec::with_capacity(n),
            velocity: Vec::with_capacity(n),
            g11: Vec::with_capacity(n),
            sqrt_g: Vec::with_capacity(n),
            rn_derivative: Vec::with_capacity(n),
        };
        for (j, &theta) in nodes.theta().iter().enumerate() {
            let d = curve.d_theta(t, theta);
            let g = d[0] * d[0] + d[1] * d[1];
            if g < lit(DEGENERATE_METRIC) {
                return Err(Error::GeometryDegenerate { node: j, g11: to_f64(g), t: to_f64(t) });
            }
            let d0 = curve.d_theta(T::zero(), theta);
            let g0 = d0[0] * d0[0] + d0[1] * d0[1];
            if g0 < lit(DEGENERATE_METRIC) {
                return Err(Error::GeometryDegenerate { node: j, g11: to_f64(g0), t: 0.0 });
            }
            grid.position.push(curve.position(t, theta));
            grid.tangent.push(d);
            grid.tangent_rate.push(curve.d_t_theta(t, theta));
            grid.velocity.push(curve.d_t(t, theta));
            grid.g11.push(g);
            grid.sqrt_g.push(g.sqrt());
            grid.rn_derivative.push((g / g0).sqrt());
        }
        Ok(grid)
    }

    pub fn nodes(&self) -> &Arc<PeriodicNodes<T>> {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Periodic trapezoid rule for `int_{Gamma_t} f`.
    pub fn surface_integral(&self, f: &[T]) -> T {
        let h = self.nodes.spacing();
        f.iter().zip(&self.sqrt_g).map(|(&fi, &sg)| fi * sg).sum::<T>() * h
    }

    pub fn length(&self) -> T {
        self.sqrt_g.iter().copied().sum::<T>() * self.nodes.spacing()
    }

    /// Lumped mass `h sqrt(g)` (diagonal).
    pub fn mass_diag(&self) -> Vec<T> {
        let h = self.nodes.spacing();
        self.sqrt_g.iter().map(|&s| h * s).collect()
    }

    /// Nodal stiffness weights `h g^{-1} sqrt(g) = h / sqrt(g)`.
    pub fn stiffness_weights(&self) -> Vec<T> {
        let h = self.nodes.spacing();
        self.sqrt_g.iter().map(|&s| h / s).collect()
    }

    /// Time derivative of [`Self::stiffness_weights`], from the analytic
    /// mixed derivative of the flow.
    pub fn stiffness_weight_rates(&self) -> Vec<T> {
        let h = self.nodes.spacing();
        self.tangent
            .iter()
            .zip(&self.tangent_rate)
            .zip(&self.g11)
            .map(|((d, dd), &g)| -h * (d[0] * dd[0] + d[1] * dd[1]) / (g * g.sqrt()))
            .collect()
    }

    /// Weak Laplace-Beltrami stiffness `S` (symmetric, PSD, kernel = constants).
    pub fn stiffness_matrix(&self) -> Matrix<T> {
        let w = self.stiffness_weights();
        let kappa = self.nodes.nyquist_coefficient(&w);
        assemble_stiffness(&self.nodes, &w, kappa)
    }

    /// Tangential gradient `g^{-1} d_theta f  d_theta X`.
    pub fn tangential_gradient(&self, f: &[T]) -> Vec<[T; 2]> {
        let df = self.nodes.differentiate(f);
        df.iter()
            .zip(&self.tangent)
            .zip(&self.g11)
            .map(|((&d, tau), &g)| [d * tau[0] / g, d * tau[1] / g])
            .collect()
    }

    /// Tangential divergence `sum_k (grad_Gamma w_k)_k`.
    pub fn tangential_divergence(&self, w: &[[T; 2]]) -> Vec<T> {
        let wx: Vec<T> = w.iter().map(|v| v[0]).collect();
        let wy: Vec<T> = w.iter().map(|v| v[1]).collect();
        let dx = self.nodes.differentiate(&wx);
        let dy = self.nodes.differentiate(&wy);
        (0..self.len())
            .map(|j| (dx[j] * self.tangent[j][0] + dy[j] * self.tangent[j][1]) / self.g11[j])
            .collect()
    }

    /// Unit normal obtained by rotating the unit tangent clockwise.
    pub fn unit_normal(&self) -> Vec<[T; 2]> {
        self.tangent
            .iter()
            .zip(&self.sqrt_g)
            .map(|(d, &s)| [d[1] / s, -d[0] / s])
            .collect()
    }
}

/// Convenience wrapper building fresh nodes.
pub fn build_grid<T: Real>(curve: &dyn MovingCurve<T>, n: usize, t: T) -> Result<SurfaceGrid<T>> {
    SurfaceGrid::build(curve, Arc::new(PeriodicNodes::new(n)), t)
}

/// Weak Laplace-Beltrami stiffness on `grid`.
pub fn laplace_beltrami_matrix<T: Real>(grid: &SurfaceGrid<T>) -> Matrix<T> {
    grid.stiffness_matrix()
}

/// Lumped mass on `grid` (diagonal entries).
pub fn mass_matrix<T: Real>(grid: &SurfaceGrid<T>) -> Vec<T> {
    grid.mass_diag()
}

/// Scalar field `f(t, x)` on the ambient plane.
pub type SpaceTimeField<'a, T> = &'a (dyn Fn(T, [T; 2]) -> T + Sync);

/// Material derivative `d/dt f(t, G(t, X(theta)))` at the nodes, by central
/// differences with the curve's `fd_step`.
pub fn material_derivative<T: Real>(
    curve: &dyn MovingCurve<T>,
    nodes: &PeriodicNodes<T>,
    f: SpaceTimeField<'_, T>,
    t: T,
) -> Vec<T> {
    let h = curve.fd_step();
    let two_h = h + h;
    nodes
        .theta()
        .iter()
        .map(|&theta| {
            let a = f(t + h, curve.position(t + h, theta));
            let b = f(t - h, curve.position(t - h, theta));
            (a - b) / two_h
        })
        .collect()
}

/// Outcome of a transport-formula evaluation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TransportCheck {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// Set when `t` was too close to `0` or `T` for a central stencil and a
    /// one-sided second-order difference was used instead.
    pub one_sided: bool,
}

/// Compares `d/dt int_{Gamma_t} f` (finite differences with step `dt`) with
/// `int_{Gamma_t} (material derivative of f + f div_Gamma v)`.
pub fn transport_residual<T: Real>(
    curve: &dyn MovingCurve<T>,
    nodes: &Arc<PeriodicNodes<T>>,
    f: SpaceTimeField<'_, T>,
    t: T,
    dt: T,
) -> Result<TransportCheck> {
    let horizon = curve.horizon();
    let integral = |s: T| -> Result<T> {
        let g = SurfaceGrid::build(curve, nodes.clone(), s)?;
        let vals: Vec<T> = g.position.iter().map(|&x| f(s, x)).collect();
        Ok(g.surface_integral(&vals))
    };
    let two = lit::<T>(2.0);
    let (lhs, one_sided) = if t - dt >= T::zero() && t + dt <= horizon {
        ((integral(t + dt)? - integral(t - dt)?) / (two * dt), false)
    } else if t + two * dt <= horizon {
        let d = -lit::<T>(3.0) * integral(t)? + lit::<T>(4.0) * integral(t + dt)? - integral(t + two * dt)?;
        (d / (two * dt), true)
    } else if t - two * dt >= T::zero() {
        let d = lit::<T>(3.0) * integral(t)? - lit::<T>(4.0) * integral(t - dt)? + integral(t - two * dt)?;
        (d / (two * dt), true)
    } else {
        return Err(Error::InvalidParameter("dt is larger than the time horizon".into()));
    };
    let grid = SurfaceGrid::build(curve, nodes.clone(), t)?;
    let md = material_derivative(curve, nodes, f, t);
    let div_v = grid.tangential_divergence(&grid.velocity);
    let integrand: Vec<T> = (0..grid.len())
        .map(|j| md[j] + f(t, grid.position[j]) * div_v[j])
        .collect();
    let rhs = grid.surface_integral(&integrand);
    Ok(TransportCheck {
        t: to_f64(t),
        lhs: to_f64(lhs),
        rhs: to_f64(rhs),
        residual: to_f64((lhs - rhs).abs()),
        one_sided,
    })
}

/// Generalized eigenvalues of `(S, M)` in ascending order.
pub fn laplace_spectrum<T: Real>(grid: &SurfaceGrid<T>) -> Vec<T> {
    let s = grid.stiffness_matrix();
    let inv_sqrt_m: Vec<T> = grid.mass_diag().iter().map(|&m| T::one() / m.sqrt()).collect();
    let b = Matrix::from_fn(s.rows(), s.cols(), |i, j| inv_sqrt_m[i] * s[(i, j)] * inv_sqrt_m[j]);
    symmetric_eigen(&b).values
}

/// Poincare constant `1 / sqrt(lambda_1)` for zero-mean functions on the
/// sampled curve.
pub fn poincare_constant<T: Real>(grid: &SurfaceGrid<T>) -> Result<T> {
    let spectrum = laplace_spectrum(grid);
    let top = spectrum.last().copied().unwrap_or(T::zero()).abs();
    let floor = lit::<T>(1e-9) * top.max(T::one());
    let lambda1 = spectrum
        .iter()
        .copied()
        .find(|&l| l > floor)
        .ok_or(Error::Singular { context: "Poincare constant" })?;
    Ok(T::one() / lambda1.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_curve_has_unit_density_and_no_velocity() {
        let c = DilatingCircle::fixed(2.0, 1.0).unwrap();
        let g: SurfaceGrid<f64> = build_grid(&c, 16, 0.5).unwrap();
        assert!(g.rn_derivative.iter().all(|&r| (r - 1.0).abs() < 1e-15));
        assert!(g.velocity.iter().all(|v| v[0] == 0.0 && v[1] == 0.0));
        assert!((g.length() - 4.0 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn rejects_time_outside_horizon() {
        let c = DilatingCircle::fixed(1.0, 1.0).unwrap();
        assert!(matches!(build_grid(&c, 8, 1.5), Err(Error::TimeOutOfRange { .. })));
    }

    #[test]
    fn collapsed_curve_is_degenerate() {
        let terms = vec![FourierTerm { k: 1, x_cos: [1.0, -1.0], x_sin: [0.0; 2], y_cos: [0.0; 2], y_sin: [1.0, -1.0] }];
        let c = CustomFourier::new(terms, 1.0).unwrap();
        assert!(matches!(build_grid(&c, 8, 1.0), Err(Error::GeometryDegenerate { .. })));
    }
}
