//! Simulation toolkit for consistent families of sticky Brownian motions
//! driven by stochastic flows.
//!
//! The crate is organised bottom-up:
//!
//! - [`covariance`]: smooth spatial covariance models, their sticky scaling
//!   limit, and random Fourier synthesis of driving fields.
//! - [`theta`]: the two-parameter splitting rate family `theta(k:l)` computed
//!   by quadrature, Monte Carlo, and via the splitting measure.
//! - [`cells`]: weak orderings of coordinates, direction vectors, piecewise
//!   linear test functions, and the generator drift test.
//! - [`npoint`]: correlated n-point simulation, exchangeability tooling, and
//!   the local-time change of clock for coordinate differences.
//! - [`sticky`]: the direct one-dimensional sticky reference construction.
//! - [`exits`]: exit experiments from the diagonal and from small balls,
//!   including the radial comparison function.
//! - [`coalescing`]: the zero-stickiness limit and splitting probabilities.
//! - [`kernels`]: stochastic kernel densities via a conservative stochastic
//!   PDE scheme and a matched-realization particle filter.
//!
//! Mathematical building blocks ([`covariance`], [`theta`], [`quad`],
//! [`scalar`]) are generic over the floating-point type through the
//! [`scalar::Scalar`] trait; the simulation layers work in `f64`. Concrete
//! `f64` aliases for the generic types live at the crate root.

pub mod cells;
pub mod coalescing;
pub mod config;
pub mod covariance;
pub mod error;
pub mod exits;
pub mod kernels;
pub mod npoint;
pub mod output;
pub mod quad;
pub mod rng;
pub mod scalar;
pub mod sticky;
pub mod theta;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Covariance model with `f64` parameters.
pub type Covariance = covariance::CovarianceModel<f64>;
/// Scaled (prelimit) model with `f64` parameters.
pub type Scaled = covariance::ScaledModel<f64>;
/// Random Fourier field with `f64` features.
pub type Field = covariance::FourierField;
/// Splitting measure with `f64` parameters.
pub type Splitting = theta::SplittingMeasure<f64>;
/// Adaptive quadrature result in `f64`.
pub type Quadrature = quad::Quadrature<f64>;
