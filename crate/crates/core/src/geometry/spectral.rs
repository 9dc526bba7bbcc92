//! Uniform periodic nodes and Fourier (trigonometric interpolant)
//! differentiation.

use crate::linalg::{dot, Matrix};
use crate::scalar::{from_usize, lit, Real};

/// `n` equispaced nodes on `[0, 2 pi)` with the spectral differentiation
/// matrix of the trigonometric interpolant.
///
/// For even `n` the Nyquist mode `(-1)^j` differentiates to zero, so the
/// stiffness matrices built on top add a rank-one term on that mode (see
/// [`assemble_stiffness`]) to keep the kernel equal to the constants.
#[derive(Debug, Clone)]
pub struct PeriodicNodes<T> {
    n: usize,
    h: T,
    theta: Vec<T>,
    diff: Matrix<T>,
}

impl<T: Real> PeriodicNodes<T> {
    pub fn new(n: usize) -> Self {
        assert!(n >= 3, "need at least three nodes");
        let two_pi = T::PI() + T::PI();
        let h = two_pi / from_usize(n);
        let theta = (0..n).map(|j| h * from_usize(j)).collect();
        let half = lit::<T>(0.5);
        let diff = Matrix::from_fn(n, n, |i, j| {
            if i == j {
                return T::zero();
            }
            let k = (i + n - j) % n;
            let sign = if k % 2 == 0 { T::one() } else { -T::one() };
            let x = half * h * from_usize(k);
            if n % 2 == 0 {
                half * sign * x.cos() / x.sin()
            } else {
                half * sign / x.sin()
            }
        });
        Self { n, h, theta, diff }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Node spacing `2 pi / n`.
    pub fn spacing(&self) -> T {
        self.h
    }

    pub fn theta(&self) -> &[T] {
        &self.theta
    }

    pub fn diff_matrix(&self) -> &Matrix<T> {
        &self.diff
    }

    /// Spectral derivative `d/dtheta` of nodal values.
    pub fn differentiate(&self, f: &[T]) -> Vec<T> {
        self.diff.matvec(f)
    }

    /// Highest wavenumber differentiated exactly.
    pub fn max_exact_mode(&self) -> usize {
        (self.n - 1) / 2
    }

    /// Sampled Nyquist mode for even `n`.
    pub fn nyquist(&self) -> Option<Vec<T>> {
        (self.n % 2 == 0).then(|| (0..self.n).map(|j| if j % 2 == 0 { T::one() } else { -T::one() }).collect())
    }

    /// Coefficient of the rank-one Nyquist term for nodal stiffness weights
    /// `w` (zero for odd `n`). On the unit circle it gives the Nyquist mode
    /// the eigenvalue `(n/2)^2`, matching the continuous spectrum.
    pub fn nyquist_coefficient(&self, w: &[T]) -> T {
        if self.n % 2 != 0 {
            return T::zero();
        }
        let n: T = from_usize(self.n);
        let mean = w.iter().copied().sum::<T>() / n;
        let half_n = lit::<T>(0.5) * n;
        half_n * half_n * mean / n
    }

    /// Applies `D^T diag(w) D + kappa q q^T` without forming it.
    pub fn stiffness_apply(&self, w: &[T], kappa: T, u: &[T]) -> Vec<T> {
        let du = self.differentiate(u);
        let weighted: Vec<T> = du.iter().zip(w).map(|(&d, &wi)| d * wi).collect();
        let mut out = self.diff.tr_matvec(&weighted);
        if let Some(q) = self.nyquist() {
            let c = kappa * dot(&q, u);
            for (o, qi) in out.iter_mut().zip(q) {
                *o = *o + c * qi;
            }
        }
        out
    }
}

/// Dense `D^T diag(w) D + kappa q q^T`.
pub fn assemble_stiffness<T: Real>(nodes: &PeriodicNodes<T>, w: &[T], kappa: T) -> Matrix<T> {
    let n = nodes.len();
    let d = nodes.diff_matrix();
    let wd = Matrix::from_fn(n, n, |i, j| w[i] * d[(i, j)]);
    let mut s = d.transpose().matmul(&wd);
    if let Some(q) = nodes.nyquist() {
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] = s[(i, j)] + kappa * q[i] * q[j];
            }
        }
    }
    s.symmetrized()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_resolved_modes() {
        for n in [16usize, 17] {
            let nodes = PeriodicNodes::<f64>::new(n);
            for k in 1..=nodes.max_exact_mode() {
                let kf = k as f64;
                let f: Vec<f64> = nodes.theta().iter().map(|t| (kf * t).sin()).collect();
                let df = nodes.differentiate(&f);
                for (d, t) in df.iter().zip(nodes.theta()) {
                    assert!((d - kf * (kf * t).cos()).abs() < 1e-10, "n={n} k={k}");
                }
            }
        }
    }

    #[test]
    fn matrix_is_antisymmetric() {
        let nodes = PeriodicNodes::<f64>::new(12);
        let d = nodes.diff_matrix();
        assert!(d.add(&d.transpose()).max_abs() < 1e-14);
    }

    #[test]
    fn matrix_free_stiffness_matches_dense() {
        let nodes = PeriodicNodes::<f64>::new(10);
        let w: Vec<f64> = nodes.theta().iter().map(|t| 1.0 + 0.3 * t.cos()).collect();
        let kappa = nodes.nyquist_coefficient(&w);
        let s = assemble_stiffness(&nodes, &w, kappa);
        let u: Vec<f64> = nodes.theta().iter().map(|t| (2.0 * t).sin() + 0.1 * t.cos()).collect();
        let a = s.matvec(&u);
        let b = nodes.stiffness_apply(&w, kappa, &u);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
