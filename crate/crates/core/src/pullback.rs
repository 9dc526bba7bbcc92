//! Heat equation on a moving interval and its pullback to the fixed interval.
//!
//! A map `r(t, ·)` carries `O_0 = (0, 1)` onto `O_t = (0, r(t, 1))`. For
//! `u_t = u_xx` on `O_t` with homogeneous Dirichlet data, `v(t, y) = u(t, r(t, y))`
//! solves
//!
//! `v_t = (a v_y)_y + b1 v_y - b2 v_y`,
//!
//! with `a = (r̄_x)^2`, `b1 = -a_y + r̄_xx`, `b2 = r̄_t`, everything composed at
//! `x = r(t, y)`. The chain rule gives `u_x r_t = -r̄_t v_y`, so the transport
//! term enters with a minus sign; [`assemble_a1_a2`] builds the second operator
//! with that sign.
//!
//! Two independent discretizations are provided: a semi-implicit finite
//! difference scheme on the fixed mesh and a conservative finite-volume
//! scheme on the moving mesh `x_i(t) = r(t, y_i)`. Because the moving nodes
//! follow the map, the pulled-back reference solution is read off node by node.

use crate::error::{Error, Result};
use crate::linalg::{solve_tridiagonal, Matrix};
use crate::scalar::{from_usize, lit, to_f64, Real};
use serde::Serialize;

/// Forward map of the fixed interval onto the moving one.
pub trait DomainMap<T: Real>: Send + Sync {
    fn name(&self) -> String;
    /// Final time on which the map is defined.
    fn horizon(&self) -> T;
    fn r(&self, t: T, y: T) -> T;
    fn r_t(&self, t: T, y: T) -> T;
    fn r_y(&self, t: T, y: T) -> T;
    fn r_yy(&self, t: T, y: T) -> T;

    /// Inverse map `x -> y`. The default inverts `r(t, ·)` numerically.
    fn r_bar(&self, t: T, x: T) -> T {
        invert_monotone(|y| self.r(t, y), |y| self.r_y(t, y), x)
    }
    /// `∂_x r̄(t, x)`.
    fn r_bar_x(&self, t: T, x: T) -> T {
        T::one() / self.r_y(t, self.r_bar(t, x))
    }
    /// `∂²_x r̄(t, x)`.
    fn r_bar_xx(&self, t: T, x: T) -> T {
        let y = self.r_bar(t, x);
        -self.r_yy(t, y) / self.r_y(t, y).powi(3)
    }
    /// `∂_t r̄(t, x)`.
    fn r_bar_t(&self, t: T, x: T) -> T {
        let y = self.r_bar(t, x);
        -self.r_t(t, y) / self.r_y(t, y)
    }
}

/// Safeguarded Newton iteration for an increasing map of `[0, 1]`.
fn invert_monotone<T: Real>(f: impl Fn(T) -> T, df: impl Fn(T) -> T, x: T) -> T {
    let (mut lo, mut hi) = (T::zero(), T::one());
    let mut y = (x - f(lo)) / (f(hi) - f(lo));
    y = y.max(lo).min(hi);
    let tol = lit::<T>(64.0) * T::epsilon();
    for _ in 0..100 {
        let res = f(y) - x;
        if res > T::zero() {
            hi = y;
        } else {
            lo = y;
        }
        let d = df(y);
        let mut next = y - res / d;
        if !(next > lo && next < hi) || d <= T::zero() {
            next = (lo + hi) * lit(0.5);
        }
        if (next - y).abs() <= tol {
            return next;
        }
        y = next;
    }
    y
}

/// Map families exposed to configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MapFamily<T> {
    Identity,
    /// `r = (1 + rate t) y`.
    Dilation { rate: T },
    /// `r = y + amplitude t y (1 - y)`.
    Bump { amplitude: T },
}

/// A map family together with its time horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalMap<T> {
    pub family: MapFamily<T>,
    pub horizon: T,
}

impl<T: Real> IntervalMap<T> {
    /// Validates that `r(t, ·)` stays a diffeomorphism on `[0, horizon]`.
    pub fn new(family: MapFamily<T>, horizon: T) -> Result<Self> {
        if !(horizon > T::zero()) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        let map = Self { family, horizon };
        let jac = match family {
            MapFamily::Identity => T::one(),
            MapFamily::Dilation { rate } => T::one() + rate * horizon,
            MapFamily::Bump { amplitude } => T::one() - amplitude.abs() * horizon,
        };
        if !(jac > T::zero()) {
            return Err(Error::NotDiffeomorphic(format!(
                "{} has Jacobian {} at the horizon",
                map.name(),
                jac
            )));
        }
        Ok(map)
    }

    pub fn identity(horizon: T) -> Result<Self> {
        Self::new(MapFamily::Identity, horizon)
    }

    pub fn dilation(rate: T, horizon: T) -> Result<Self> {
        Self::new(MapFamily::Dilation { rate }, horizon)
    }

    pub fn bump(amplitude: T, horizon: T) -> Result<Self> {
        Self::new(MapFamily::Bump { amplitude }, horizon)
    }
}

impl<T: Real> DomainMap<T> for IntervalMap<T> {
    fn name(&self) -> String {
        match self.family {
            MapFamily::Identity => "identity".into(),
            MapFamily::Dilation { rate } => format!("dilation(rate={rate})"),
            MapFamily::Bump { amplitude } => format!("bump(amplitude={amplitude})"),
        }
    }

    fn horizon(&self) -> T {
        self.horizon
    }

    fn r(&self, t: T, y: T) -> T {
        match self.family {
            MapFamily::Identity => y,
            MapFamily::Dilation { rate } => (T::one() + rate * t) * y,
            MapFamily::Bump { amplitude } => y + amplitude * t * y * (T::one() - y),
        }
    }

    fn r_t(&self, _t: T, y: T) -> T {
        match self.family {
            MapFamily::Identity => T::zero(),
            MapFamily::Dilation { rate } => rate * y,
            MapFamily::Bump { amplitude } => amplitude * y * (T::one() - y),
        }
    }

    fn r_y(&self, t: T, y: T) -> T {
        match self.family {
            MapFamily::Identity => T::one(),
            MapFamily::Dilation { rate } => T::one() + rate * t,
            MapFamily::Bump { amplitude } => T::one() + amplitude * t * (T::one() - lit::<T>(2.0) * y),
        }
    }

    fn r_yy(&self, t: T, _y: T) -> T {
        match self.family {
            MapFamily::Bump { amplitude } => -lit::<T>(2.0) * amplitude * t,
            _ => T::zero(),
        }
    }

    fn r_bar(&self, t: T, x: T) -> T {
        match self.family {
            MapFamily::Identity => x,
            MapFamily::Dilation { rate } => x / (T::one() + rate * t),
            MapFamily::Bump { amplitude } => {
                // Root in [0, 1] of  c y^2 - (1 + c) y + x = 0, in cancellation-free form.
                let c = amplitude * t;
                let p = T::one() + c;
                lit::<T>(2.0) * x / (p + (p * p - lit::<T>(4.0) * c * x).max(T::zero()).sqrt())
            }
        }
    }
}

/// Sanity report on a domain map.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MapReport {
    /// `max |r(0, y) - y|`.
    pub identity_defect: f64,
    /// `min ∂_y r` over the sample grid.
    pub min_jacobian: f64,
    /// `max |r̄(t, r(t, y)) - y|`.
    pub inverse_defect: f64,
}

impl MapReport {
    pub fn pass(&self) -> bool {
        self.identity_defect <= 1e-12 && self.min_jacobian > 0.0 && self.inverse_defect <= 1e-10
    }
}

/// Samples the map on a `points x times` grid of `[0, 1] x [0, horizon]`.
pub fn check_map<T: Real>(map: &dyn DomainMap<T>, points: usize, times: usize) -> MapReport {
    let points = points.max(2);
    let times = times.max(1);
    let mut rep = MapReport { identity_defect: 0.0, min_jacobian: f64::INFINITY, inverse_defect: 0.0 };
    for i in 0..points {
        let y = from_usize::<T>(i) / from_usize::<T>(points - 1);
        rep.identity_defect = rep.identity_defect.max(to_f64((map.r(T::zero(), y) - y).abs()));
        for k in 0..=times {
            let t = map.horizon() * from_usize::<T>(k) / from_usize::<T>(times);
            rep.min_jacobian = rep.min_jacobian.min(to_f64(map.r_y(t, y)));
            let back = map.r_bar(t, map.r(t, y));
            rep.inverse_defect = rep.inverse_defect.max(to_f64((back - y).abs()));
        }
    }
    rep
}

/// Coefficients of the transformed equation at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coefficients<T> {
    pub a11: T,
    pub b1: T,
    pub b2: T,
}

/// `a11 = (r̄_x)^2`, `b1 = -∂_y a11 + r̄_xx`, `b2 = r̄_t`, composed at `x = r(t, y)`.
pub fn transformed_coefficients<T: Real>(map: &dyn DomainMap<T>, t: T, y: T) -> Result<Coefficients<T>> {
    let ry = map.r_y(t, y);
    if !(ry > T::zero()) {
        return Err(Error::NotDiffeomorphic(format!("∂_y r = {ry} at (t, y) = ({t}, {y})")));
    }
    let x = map.r(t, y);
    let rbx = map.r_bar_x(t, x);
    let a11 = rbx * rbx;
    // a11(y) = r_y^{-2}, so ∂_y a11 = -2 r_yy / r_y^3.
    let da = -lit::<T>(2.0) * map.r_yy(t, y) / ry.powi(3);
    Ok(Coefficients { a11, b1: -da + map.r_bar_xx(t, x), b2: map.r_bar_t(t, x) })
}

/// Uniform mesh of `[0, 1]` with `cells` cells; unknowns live on the interior nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Mesh {
    pub cells: usize,
}

impl Mesh {
    pub fn uniform(cells: usize) -> Result<Self> {
        if cells < 2 {
            return Err(Error::InvalidParameter(format!("mesh needs at least 2 cells, got {cells}")));
        }
        Ok(Self { cells })
    }

    pub fn h<T: Real>(&self) -> T {
        T::one() / from_usize::<T>(self.cells)
    }

    /// All nodes including both ends.
    pub fn nodes<T: Real>(&self) -> Vec<T> {
        (0..=self.cells).map(|i| from_usize::<T>(i) * self.h::<T>()).collect()
    }

    pub fn interior(&self) -> usize {
        self.cells - 1
    }

    /// Samples `f` on all nodes.
    pub fn sample<T: Real>(&self, f: impl Fn(T) -> T) -> Vec<T> {
        self.nodes::<T>().into_iter().map(f).collect()
    }
}

/// Tridiagonal operator on the interior unknowns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tridiagonal<T> {
    pub lower: Vec<T>,
    pub diag: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Real> Tridiagonal<T> {
    pub fn zeros(n: usize) -> Self {
        Self { lower: vec![T::zero(); n - 1], diag: vec![T::zero(); n], upper: vec![T::zero(); n - 1] }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, v: &[T]) -> Vec<T> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * v[i];
                if i > 0 {
                    s = s + self.lower[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    s = s + self.upper[i] * v[i + 1];
                }
                s
            })
            .collect()
    }

    pub fn to_dense(&self) -> Matrix<T> {
        let n = self.dim();
        Matrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if j + 1 == i {
                self.lower[j]
            } else if i + 1 == j {
                self.upper[i]
            } else {
                T::zero()
            }
        })
    }

    fn add_advection(&mut self, row: usize, c: T, h: T) {
        let w = c / (lit::<T>(2.0) * h);
        if row > 0 {
            self.lower[row - 1] = self.lower[row - 1] - w;
        }
        if row + 1 < self.dim() {
            self.upper[row] = self.upper[row] + w;
        }
    }
}

/// Weak-form diffusion block `(a v_y)_y`, with `a` sampled at cell midpoints.
pub fn assemble_diffusion<T: Real>(map: &dyn DomainMap<T>, t: T, mesh: &Mesh) -> Result<Tridiagonal<T>> {
    let h = mesh.h::<T>();
    let half = lit::<T>(0.5);
    let a: Vec<T> = (0..mesh.cells)
        .map(|k| transformed_coefficients(map, t, (from_usize::<T>(k) + half) * h).map(|c| c.a11))
        .collect::<Result<_>>()?;
    let n = mesh.interior();
    let mut op = Tridiagonal::zeros(n);
    let h2 = h * h;
    for i in 0..n {
        // Interior node i+1 sits between cells i and i+1.
        op.diag[i] = -(a[i] + a[i + 1]) / h2;
        if i > 0 {
            op.lower[i - 1] = a[i] / h2;
        }
        if i + 1 < n {
            op.upper[i] = a[i + 1] / h2;
        }
    }
    Ok(op)
}

/// Returns `(A1, A2)`: `A1 v = (a v_y)_y + b1 v_y`, `A2 v = -b2 v_y`, centered.
pub fn assemble_a1_a2<T: Real>(
    map: &dyn DomainMap<T>,
    t: T,
    mesh: &Mesh,
) -> Result<(Tridiagonal<T>, Tridiagonal<T>)> {
    let h = mesh.h::<T>();
    let mut a1 = assemble_diffusion(map, t, mesh)?;
    let mut a2 = Tridiagonal::zeros(mesh.interior());
    for i in 0..mesh.interior() {
        let c = transformed_coefficients(map, t, from_usize::<T>(i + 1) * h)?;
        a1.add_advection(i, c.b1, h);
        a2.add_advection(i, -c.b2, h);
    }
    Ok((a1, a2))
}

/// Multiplication by the Jacobian `∂_y r(t, ·)` on all nodes.
pub fn iota_star_flat<T: Real>(map: &dyn DomainMap<T>, t: T, mesh: &Mesh, f: &[T]) -> Vec<T> {
    mesh.nodes::<T>().iter().zip(f).map(|(&y, &v)| map.r_y(t, y) * v).collect()
}

/// `h Σ v_i ∂_y r(t, y_i) (A1 v)_i` over interior nodes: the discrete `<ι*_t A1 v, v>`.
pub fn weighted_a1_form<T: Real>(map: &dyn DomainMap<T>, t: T, mesh: &Mesh, v_interior: &[T]) -> Result<T> {
    let (a1, _) = assemble_a1_a2(map, t, mesh)?;
    let av = a1.apply(v_interior);
    let h = mesh.h::<T>();
    Ok(v_interior
        .iter()
        .zip(&av)
        .enumerate()
        .map(|(i, (&v, &a))| h * map.r_y(t, from_usize::<T>(i + 1) * h) * v * a)
        .sum())
}

const GAUSS5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

fn composite_gauss<T: Real>(a: T, b: T, panels: usize, f: impl Fn(T) -> T) -> T {
    let w = (b - a) / from_usize::<T>(panels);
    let half = lit::<T>(0.5);
    let mut s = T::zero();
    for p in 0..panels {
        let mid = a + (from_usize::<T>(p) + half) * w;
        for &(xi, wi) in &GAUSS5 {
            s = s + lit::<T>(wi) * f(mid + half * w * lit(xi));
        }
    }
    s * half * w
}

/// `(f, g)_t = ∫_{O_t} f(r̄(t, x)) g(r̄(t, x)) dx`, integrated on the moving interval.
pub fn moved_inner<T: Real>(
    map: &dyn DomainMap<T>,
    t: T,
    f: impl Fn(T) -> T,
    g: impl Fn(T) -> T,
    panels: usize,
) -> T {
    let end = map.r(t, T::one());
    composite_gauss(map.r(t, T::zero()), end, panels, |x| {
        let y = map.r_bar(t, x);
        f(y) * g(y)
    })
}

/// `∫_{O_0} f ι*_t g dy`, with `ι*_t` the multiplication by `∂_y r`.
pub fn pulled_inner<T: Real>(
    map: &dyn DomainMap<T>,
    t: T,
    f: impl Fn(T) -> T,
    g: impl Fn(T) -> T,
    panels: usize,
) -> T {
    composite_gauss(T::zero(), T::one(), panels, |y| f(y) * map.r_y(t, y) * g(y))
}

/// Nodal trajectory. `positions[k]` holds the physical node coordinates at
/// `times[k]` (the fixed mesh for the fixed-domain solver).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub positions: Vec<Vec<T>>,
    pub values: Vec<Vec<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn last(&self) -> &[T] {
        self.values.last().expect("trajectory has the initial state")
    }

    /// `sqrt(Σ |K_i| u_i^2)` at each stored time, with dual cells of the node positions.
    pub fn l2_norms(&self) -> Vec<T> {
        self.positions
            .iter()
            .zip(&self.values)
            .map(|(x, u)| {
                let n = x.len();
                (1..n - 1)
                    .map(|i| (x[i + 1] - x[i - 1]) * lit(0.5) * u[i] * u[i])
                    .sum::<T>()
                    .sqrt()
            })
            .collect()
    }

    /// Smallest value over all times and nodes.
    pub fn min_value(&self) -> T {
        self.values.iter().flatten().fold(T::infinity(), |a, &b| a.min(b))
    }
}

fn step_count<T: Real>(map: &dyn DomainMap<T>, dt: T, t_end: T) -> Result<usize> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    if t_end < T::zero() || t_end > map.horizon() * (T::one() + lit(1e-12)) {
        return Err(Error::TimeOutOfRange { t: to_f64(t_end), horizon: to_f64(map.horizon()) });
    }
    let steps = (t_end / dt - lit(1e-9)).ceil().to_usize().unwrap_or(0);
    Ok(steps)
}

fn check_initial<T: Real>(mesh: &Mesh, v0: &[T]) -> Result<()> {
    if v0.len() != mesh.cells + 1 {
        return Err(Error::Dimension { expected: mesh.cells + 1, got: v0.len() });
    }
    let tol = lit::<T>(1e-12);
    if v0[0].abs() > tol || v0[mesh.cells].abs() > tol {
        return Err(Error::InvalidParameter("initial data must vanish at both ends".into()));
    }
    Ok(())
}

fn with_boundary<T: Real>(interior: &[T]) -> Vec<T> {
    let mut v = Vec::with_capacity(interior.len() + 2);
    v.push(T::zero());
    v.extend_from_slice(interior);
    v.push(T::zero());
    v
}

/// Largest `|b2|` over the mesh nodes at the given times.
pub fn max_transport_speed<T: Real>(map: &dyn DomainMap<T>, mesh: &Mesh, times: &[T]) -> Result<T> {
    let mut m = T::zero();
    for &t in times {
        for y in mesh.nodes::<T>() {
            m = m.max(transformed_coefficients(map, t, y)?.b2.abs());
        }
    }
    Ok(m)
}

/// Fixed-domain solver: implicit Euler in `A1`, explicit in `A2`.
///
/// The step is shrunk so that an integer number of steps reaches `t_end`;
/// the advection limit `dt <= h / max|b2|` is enforced.
pub fn solve_fixed_domain<T: Real>(
    map: &dyn DomainMap<T>,
    mesh: &Mesh,
    dt: T,
    t_end: T,
    v0: &[T],
) -> Result<Trajectory<T>> {
    check_initial(mesh, v0)?;
    let steps = step_count(map, dt, t_end)?;
    let dt = if steps == 0 { dt } else { t_end / from_usize::<T>(steps) };
    let times: Vec<T> = (0..=steps).map(|k| from_usize::<T>(k) * dt).collect();
    let speed = max_transport_speed(map, mesh, &times)?;
    let h = mesh.h::<T>();
    if speed > T::zero() && dt > h / speed {
        return Err(Error::Cfl { dt: to_f64(dt), limit: to_f64(h / speed) });
    }
    let nodes = mesh.nodes::<T>();
    let mut v: Vec<T> = v0[1..mesh.cells].to_vec();
    let mut traj = Trajectory { times: times.clone(), positions: vec![nodes.clone()], values: vec![v0.to_vec()] };
    traj.values[0][0] = T::zero();
    traj.values[0][mesh.cells] = T::zero();
    for k in 0..steps {
        let (_, a2) = assemble_a1_a2(map, times[k], mesh)?;
        let (a1, _) = assemble_a1_a2(map, times[k + 1], mesh)?;
        let adv = a2.apply(&v);
        let rhs: Vec<T> = v.iter().zip(&adv).map(|(&x, &a)| x + dt * a).collect();
        let lower: Vec<T> = a1.lower.iter().map(|&l| -dt * l).collect();
        let upper: Vec<T> = a1.upper.iter().map(|&u| -dt * u).collect();
        let diag: Vec<T> = a1.diag.iter().map(|&d| T::one() - dt * d).collect();
        v = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
        traj.positions.push(nodes.clone());
        traj.values.push(with_boundary(&v));
    }
    Ok(traj)
}

/// Moving-mesh reference solver for `u_t = u_xx` on `O_t`.
///
/// Vertex-centred finite volumes on the nodes `x_i(t) = r(t, y_i)`: each dual
/// cell satisfies `d/dt ∫_K u = [u_x + w u]` at its faces, with face velocity
/// `w` taken from the discrete node motion so that constants are transported
/// exactly. Fully implicit in time.
pub fn solve_moving_reference<T: Real>(
    map: &dyn DomainMap<T>,
    mesh: &Mesh,
    dt: T,
    t_end: T,
    u0: &[T],
) -> Result<Trajectory<T>> {
    check_initial(mesh, u0)?;
    let steps = step_count(map, dt, t_end)?;
    let dt = if steps == 0 { dt } else { t_end / from_usize::<T>(steps) };
    let y = mesh.nodes::<T>();
    let place = |t: T| -> Vec<T> { y.iter().map(|&yi| map.r(t, yi)).collect() };
    let half = lit::<T>(0.5);
    let j = mesh.cells;
    let n = mesh.interior();
    let mut x_old = place(T::zero());
    let mut u: Vec<T> = u0.to_vec();
    u[0] = T::zero();
    u[j] = T::zero();
    let mut traj = Trajectory { times: vec![T::zero()], positions: vec![x_old.clone()], values: vec![u.clone()] };
    for k in 0..steps {
        let t_new = from_usize::<T>(k + 1) * dt;
        let x_new = place(t_new);
        for i in 1..=j {
            if !(x_new[i] > x_new[i - 1]) {
                return Err(Error::NotDiffeomorphic(format!("moving mesh tangled at t = {t_new}")));
            }
        }
        let vel: Vec<T> = x_new.iter().zip(&x_old).map(|(&a, &b)| (a - b) / dt).collect();
        let mut lower = vec![T::zero(); n - 1];
        let mut diag = vec![T::zero(); n];
        let mut upper = vec![T::zero(); n - 1];
        let mut rhs = vec![T::zero(); n];
        for r in 0..n {
            let i = r + 1;
            let vol_old = (x_old[i + 1] - x_old[i - 1]) * half;
            let vol_new = (x_new[i + 1] - x_new[i - 1]) * half;
            let dr = x_new[i + 1] - x_new[i];
            let dl = x_new[i] - x_new[i - 1];
            let wr = (vel[i] + vel[i + 1]) * half;
            let wl = (vel[i - 1] + vel[i]) * half;
            // vol_new u_i - dt [ (u_{i+1}-u_i)/dr - (u_i-u_{i-1})/dl
            //                    + wr (u_i+u_{i+1})/2 - wl (u_{i-1}+u_i)/2 ] = vol_old u_i^old
            diag[r] = vol_new + dt * (T::one() / dr + T::one() / dl) - dt * half * (wr - wl);
            if r > 0 {
                lower[r - 1] = -dt / dl + dt * half * wl;
            }
            if r + 1 < n {
                upper[r] = -dt / dr - dt * half * wr;
            }
            rhs[r] = vol_old * u[i];
        }
        let inner = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
        u = with_boundary(&inner);
        traj.times.push(t_new);
        traj.positions.push(x_new.clone());
        traj.values.push(u.clone());
        x_old = x_new;
    }
    Ok(traj)
}

/// Largest nodal gap between the pulled-back reference solution and the
/// fixed-domain solution over all common times.
pub fn frame_gap<T: Real>(fixed: &Trajectory<T>, moving: &Trajectory<T>) -> Result<T> {
    if fixed.values.len() != moving.values.len() {
        return Err(Error::Dimension { expected: fixed.values.len(), got: moving.values.len() });
    }
    let mut gap = T::zero();
    for (a, b) in fixed.values.iter().zip(&moving.values) {
        for (&p, &q) in a.iter().zip(b) {
            gap = gap.max((p - q).abs());
        }
    }
    Ok(gap)
}

/// One refinement level of the frame-equivalence study.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EquivalenceRow {
    pub h: f64,
    pub dt: f64,
    pub sup_error: f64,
    /// `log2` of the error ratio to the previous (coarser) level.
    pub rate: Option<f64>,
}

/// Solves both formulations on each mesh with `dt = dt_factor h^2` and records the sup gap.
pub fn frame_equivalence<T: Real>(
    map: &dyn DomainMap<T>,
    cells: &[usize],
    dt_factor: T,
    t_end: T,
    u0: impl Fn(T) -> T,
) -> Result<Vec<EquivalenceRow>> {
    let mut rows: Vec<EquivalenceRow> = Vec::new();
    for &c in cells {
        let mesh = Mesh::uniform(c)?;
        let h = mesh.h::<T>();
        let dt = dt_factor * h * h;
        let v0 = mesh.sample(&u0);
        let fixed = solve_fixed_domain(map, &mesh, dt, t_end, &v0)?;
        let moving = solve_moving_reference(map, &mesh, dt, t_end, &v0)?;
        let err = to_f64(frame_gap(&fixed, &moving)?);
        let rate = rows.last().map(|prev| (prev.sup_error / err).ln() / (prev.h / to_f64(h)).ln());
        rows.push(EquivalenceRow { h: to_f64(h), dt: to_f64(dt), sup_error: err, rate });
    }
    Ok(rows)
}
