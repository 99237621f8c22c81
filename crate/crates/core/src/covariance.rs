//! Covariance functions psi, their scaled versions, the two-point speed
//! density, and random-Fourier synthesis of the driving Gaussian field.
//!
//! The default model is the Gaussian `psi(x) = exp(-a^2 x^2)`, which meets
//! every structural assumption (psi(0)=1, |psi|<1 off the origin, decay at
//! infinity, curvature constant a at 0) and has a Gaussian spectral measure,
//! so the driving field can be synthesised exactly by random Fourier
//! features. A user-tabulated psi is validated numerically and supports only
//! the dense-covariance simulation path.

use crate::error::{Error, Result};
use crate::quad::{adaptive_simpson, Quadrature};
use crate::scalar::Scalar;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Functional form of psi.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CovarianceKind<F> {
    /// `psi(x) = exp(-a^2 x^2)`.
    Gaussian,
    /// Even function tabulated on `[0, x_max]` at uniform spacing, linearly
    /// interpolated, zero beyond the table.
    Tabulated { spacing: F, values: Vec<F> },
}

impl<F> CovarianceKind<F> {
    pub fn name(&self) -> &'static str {
        match self {
            CovarianceKind::Gaussian => "gaussian",
            CovarianceKind::Tabulated { .. } => "tabulated",
        }
    }
}

/// A covariance function psi together with its curvature constant a,
/// defined by `(1 - psi(x))/x^2 -> a^2` as `x -> 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceModel<F> {
    pub kind: CovarianceKind<F>,
    pub a: F,
}

impl<F: Scalar> CovarianceModel<F> {
    /// Gaussian model with curvature constant `a > 0`.
    pub fn gaussian(a: F) -> Result<Self> {
        if !(a > F::zero()) {
            return Err(Error::InvalidConfig("a must be > 0".into()));
        }
        Ok(Self {
            kind: CovarianceKind::Gaussian,
            a,
        })
    }

    /// User-tabulated model; validates the structural assumptions on the grid.
    pub fn tabulated(a: F, spacing: F, values: Vec<F>) -> Result<Self> {
        if !(a > F::zero()) || !(spacing > F::zero()) || values.len() < 4 {
            return Err(Error::InvalidConfig(
                "tabulated psi needs a > 0, spacing > 0 and at least 4 samples".into(),
            ));
        }
        let model = Self {
            kind: CovarianceKind::Tabulated { spacing, values },
            a,
        };
        model.validate_assumptions()?;
        Ok(model)
    }

    /// Evaluate psi at `x`; even in `x` by construction.
    pub fn psi(&self, x: F) -> F {
        let x = x.abs();
        match &self.kind {
            CovarianceKind::Gaussian => (-(self.a * self.a) * x * x).exp(),
            CovarianceKind::Tabulated { spacing, values } => {
                let t = x / *spacing;
                let i = t.floor().to_usize().unwrap_or(usize::MAX);
                if i + 1 >= values.len() {
                    return F::zero();
                }
                let frac = t - t.floor();
                values[i] * (F::one() - frac) + values[i + 1] * frac
            }
        }
    }

    /// `1 - psi(x)`, computed without cancellation near `x = 0` (the direct
    /// difference loses half the significant digits where `psi` is close
    /// to 1, which defeats adaptive quadrature of the speed density).
    pub fn one_minus_psi(&self, x: F) -> F {
        match &self.kind {
            CovarianceKind::Gaussian => -(-(self.a * self.a) * x * x).exp_m1(),
            CovarianceKind::Tabulated { .. } => F::one() - self.psi(x),
        }
    }

    /// Grid checks of psi(0)=1, |psi|<1 off the origin, decay, and the
    /// curvature limit near 0.
    fn validate_assumptions(&self) -> Result<()> {
        let one = F::one();
        if (self.psi(F::zero()) - one).abs() > F::from_f64_lossy(1e-12) {
            return Err(Error::InvalidConfig("psi(0) must equal 1".into()));
        }
        let (spacing, len) = match &self.kind {
            CovarianceKind::Tabulated { spacing, values } => (*spacing, values.len()),
            CovarianceKind::Gaussian => return Ok(()),
        };
        let x_max = spacing * F::from_usize(len - 1).unwrap();
        for i in 1..=200 {
            let x = x_max * F::from_usize(i).unwrap() / F::from_f64_lossy(200.0);
            if self.psi(x).abs() >= one {
                return Err(Error::InvalidConfig(format!("|psi({x})| >= 1")));
            }
        }
        if self.psi(x_max).abs() > F::from_f64_lossy(1e-2) {
            return Err(Error::InvalidConfig(
                "tabulated psi must decay below 1e-2 at the table edge".into(),
            ));
        }
        // curvature: |(1 - psi(x))/x^2 - a^2| <= 10 a^4 x^2 on |x| <= 0.1/a
        let a2 = self.a * self.a;
        for i in 1..=20 {
            let x = F::from_f64_lossy(0.1) / self.a * F::from_usize(i).unwrap()
                / F::from_f64_lossy(20.0);
            if x < spacing {
                continue; // below table resolution
            }
            let ratio = (one - self.psi(x)) / (x * x);
            // allow for the linear-interpolation error of the table,
            // |interp - psi| <= spacing^2 max|psi''| / 8 <= a^2 spacing^2 / 2
            let bound = F::from_f64_lossy(10.0) * a2 * a2 * x * x
                + a2 * spacing * spacing / (x * x)
                + F::from_f64_lossy(1e-6) * a2;
            if (ratio - a2).abs() > bound {
                return Err(Error::InvalidConfig(format!(
                    "curvature mismatch at x={x}: (1-psi)/x^2 = {ratio}, a^2 = {a2}"
                )));
            }
        }
        Ok(())
    }
}

/// The prelimit model: psi scaled as `psi(n x)` plus independent diffusivity
/// `b/n` per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledModel<F> {
    pub base: CovarianceModel<F>,
    pub n: u32,
    pub b: F,
}

impl<F: Scalar> ScaledModel<F> {
    pub fn new(base: CovarianceModel<F>, n: u32, b: F) -> Result<Self> {
        if n == 0 || !(b > F::zero()) {
            return Err(Error::InvalidConfig("need n >= 1 and b > 0".into()));
        }
        Ok(Self { base, n, b })
    }

    pub fn n_f(&self) -> F {
        F::from_u32(self.n).unwrap()
    }

    /// `b^2 / n^2`, the independent-diffusivity variance rate.
    pub fn beta(&self) -> F {
        let n = self.n_f();
        self.b * self.b / (n * n)
    }

    /// Scaled covariance `psi(n z)`.
    pub fn psi_scaled(&self, z: F) -> F {
        self.base.psi(self.n_f() * z)
    }

    /// Variance rate of a single coordinate, `1 + b^2/n^2`.
    pub fn single_rate(&self) -> F {
        F::one() + self.beta()
    }

    /// Variance rate of the difference of a coincident pair, `2 b^2/n^2`.
    pub fn pair_difference_rate_at_zero(&self) -> F {
        F::from_f64_lossy(2.0) * self.beta()
    }

    /// Speed density of the pair difference, `1/(1 + b^2 n^-2 - psi(nz))`.
    pub fn speed_density(&self, z: F) -> F {
        F::one() / (self.beta() + self.base.one_minus_psi(self.n_f() * z))
    }

    /// `int_{-h}^{h} speed_density dz` by adaptive quadrature.
    ///
    /// As `n -> infinity` at fixed `h` this tends to `2h + pi/(ab)`.
    pub fn speed_measure_mass(&self, half_width: F) -> Result<F> {
        if !(half_width > F::zero()) {
            return Err(Error::InvalidConfig("half_width must be > 0".into()));
        }
        // Split at the peak so the adaptive rule zooms straight onto it.
        let tol = F::from_f64_lossy(1e-7) * half_width * self.speed_density(F::zero())
            / self.n_f();
        let tol = tol.max(F::from_f64_lossy(1e-13));
        let f = |z: F| self.speed_density(z);
        let left: Quadrature<F> = adaptive_simpson(&f, -half_width, F::zero(), tol)?;
        let right: Quadrature<F> = adaptive_simpson(&f, F::zero(), half_width, tol)?;
        Ok(left.value + right.value)
    }

    /// `int g_n dz` with `g_n(z) = (speed_density(z) - 1/(1+beta)) / 2`:
    /// the local-time coefficient of the pair-difference clock. Converges to
    /// `theta^{-1}/2 = pi/(2ab)` as `n -> infinity`.
    pub fn clock_local_time_coefficient(&self) -> Result<F> {
        let base = F::one() / self.single_rate();
        let half = F::from_f64_lossy(0.5);
        // g_n is concentrated on |z| <~ 1/n; integrate out to where psi has died.
        let cut = F::from_f64_lossy(40.0) / (self.base.a * self.n_f());
        // the value tends to pi/(2ab); ask for ~9 digits relative to that scale
        let tol = F::from_f64_lossy(1e-9) / (self.base.a * self.b);
        let f = |z: F| half * (self.speed_density(z) - base);
        let left: Quadrature<F> = adaptive_simpson(&f, -cut, F::zero(), tol)?;
        let right: Quadrature<F> = adaptive_simpson(&f, F::zero(), cut, tol)?;
        Ok(left.value + right.value)
    }
}

/// One draw of the driving field, as random Fourier features: the field
/// increment over a step `dt` at position `x` is `sqrt(dt) * eval(x)` with
/// amplitudes resampled each step.
#[derive(Debug, Clone)]
pub struct FourierField {
    /// (wavenumber, cos amplitude, sin amplitude)
    pub features: Vec<(f64, f64, f64)>,
}

impl FourierField {
    /// Number of features J.
    pub fn count(&self) -> usize {
        self.features.len()
    }

    /// Evaluate the unit-rate field at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.features
            .iter()
            .map(|&(k, c, s)| {
                let (sin, cos) = (k * x).sin_cos();
                c * cos + s * sin
            })
            .sum()
    }

    /// Redraw the amplitudes (white-in-time field; wavenumbers stay fixed).
    pub fn resample_amplitudes<R: Rng>(&mut self, rng: &mut R) {
        let scale = (1.0 / self.count() as f64).sqrt();
        for f in &mut self.features {
            f.1 = scale * rng.sample::<f64, _>(StandardNormal);
            f.2 = scale * rng.sample::<f64, _>(StandardNormal);
        }
    }
}

/// Draw a random-Fourier realization of the field with covariance
/// `psi(n(x-y))` per unit time. Only the Gaussian kind has a closed-form
/// spectral measure (itself Gaussian with variance `2 a^2 n^2`).
pub fn sample_field<R: Rng>(scaled: &ScaledModel<f64>, features: usize, rng: &mut R) -> Result<FourierField> {
    if features == 0 {
        return Err(Error::InvalidConfig("need at least one Fourier feature".into()));
    }
    match scaled.base.kind {
        CovarianceKind::Gaussian => {}
        ref other => {
            return Err(Error::UnsupportedSpectral {
                kind: other.name().into(),
            })
        }
    }
    let sigma_k = std::f64::consts::SQRT_2 * scaled.base.a * f64::from(scaled.n);
    let mut field = FourierField {
        features: (0..features)
            .map(|_| {
                let k: f64 = sigma_k * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
                (k, 0.0, 0.0)
            })
            .collect(),
    };
    field.resample_amplitudes(rng);
    Ok(field)
}
