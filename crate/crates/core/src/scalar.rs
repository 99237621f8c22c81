//! Scalar abstraction for the deterministic math layer.
//!
//! The analytic parts of the crate (covariance functions, quadrature,
//! the theta integrals, the cell machinery and the radial ODE) are generic
//! over the floating-point type through [`Scalar`]. Simulation code is
//! instantiated at `f64`; the crate root exposes concrete aliases.

use num_traits::{Float, FloatConst, FromPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar with the special functions the toolkit needs.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Error function.
    fn erf(self) -> Self;
    /// Complementary error function.
    fn erfc(self) -> Self;
    /// Inverse of the standard normal distribution function.
    fn inv_norm_cdf(self) -> Self;
    /// Natural log of the gamma function.
    fn ln_gamma(self) -> Self;

    /// Standard normal distribution function Phi.
    fn norm_cdf(self) -> Self {
        let half = Self::from_f64(0.5).unwrap();
        half * (-self / Self::SQRT_2()).erfc()
    }

    /// Standard normal density phi.
    fn norm_pdf(self) -> Self {
        let two = Self::from_f64(2.0).unwrap();
        (-self * self / two).exp() / (two * Self::PI()).sqrt()
    }

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).unwrap()
    }
}

impl Scalar for f64 {
    fn erf(self) -> Self {
        statrs::function::erf::erf(self)
    }
    fn erfc(self) -> Self {
        statrs::function::erf::erfc(self)
    }
    fn inv_norm_cdf(self) -> Self {
        -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * self)
    }
    fn ln_gamma(self) -> Self {
        statrs::function::gamma::ln_gamma(self)
    }
}

impl Scalar for f32 {
    fn erf(self) -> Self {
        statrs::function::erf::erf(self as f64) as f32
    }
    fn erfc(self) -> Self {
        statrs::function::erf::erfc(self as f64) as f32
    }
    fn inv_norm_cdf(self) -> Self {
        (self as f64).inv_norm_cdf() as f32
    }
    fn ln_gamma(self) -> Self {
        statrs::function::gamma::ln_gamma(self as f64) as f32
    }
}
