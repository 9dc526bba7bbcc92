//! Numerical toolkit for variational stochastic PDEs on moving closed curves.
//!
//! The pivot space is the zero-mean negative Sobolev space on the reference
//! curve, equipped with the time-dependent inner products induced by the
//! moving geometry. Modules, bottom-up:
//!
//! - [`geometry`]: sampled curves, metric, spectral tangential calculus,
//!   stiffness/mass, transport formula.
//! - [`spaces`]: time-dependent inner products, Riesz maps and the operators
//!   relating them to the reference inner product.
//! - [`operators`]: Stefan / porous-media drift, noise, and structural checks.
//! - [`galerkin`]: time-orthonormalized bases, projections, Euler-Maruyama.
//! - [`energy`]: Ito energy ledger and the stochastic transport balance.
//! - [`pullback`]: heat equation on a moving interval, pulled back to a fixed one.

pub mod error;
pub mod geometry;
pub mod linalg;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;
pub mod operators;
pub mod spaces;
pub mod galerkin;
pub mod energy;
pub mod pullback;

/// Double-precision aliases for the common entry points.
pub type GramPath64 = spaces::GramPath<f64>;
pub type TimeBasis64 = galerkin::TimeBasis<f64>;
pub type StefanModel64 = operators::StefanModel<f64>;
pub type NoiseModel64 = operators::NoiseModel<f64>;
pub type Nonlinearity64 = operators::Nonlinearity<f64>;
pub type PathState64 = galerkin::PathState<f64>;
pub type IntervalMap64 = pullback::IntervalMap<f64>;
pub type Matrix64 = linalg::Matrix<f64>;
