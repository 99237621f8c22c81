//! Stochastic flow of kernels, two ways: filtering Monte Carlo (particles
//! sharing one field realization) and an advection-diffusion SPDE on a
//! periodic grid, both driven by the same spectral synthesis of the common
//! field so that matched realizations can be compared bin by bin.

use crate::covariance::{CovarianceKind, ScaledModel};
use crate::error::{Error, Result};
use crate::rng::substream;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// A density on the periodic interval `[origin, origin + length)`.
#[derive(Debug, Clone)]
pub struct KernelField {
    pub origin: f64,
    pub length: f64,
    /// Density value per cell (units 1/length).
    pub values: Vec<f64>,
    pub time: f64,
}

impl KernelField {
    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn cell_width(&self) -> f64 {
        self.length / self.values.len() as f64
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_width()
    }

    /// Unit point mass in the cell containing `x0`.
    pub fn point_mass(x0: f64, origin: f64, length: f64, cells: usize) -> Result<Self> {
        if !(length > 0.0) || cells < 4 {
            return Err(Error::InvalidConfig("need length > 0 and at least 4 cells".into()));
        }
        let dx = length / cells as f64;
        let idx = (((x0 - origin) / dx).floor() as i64).rem_euclid(cells as i64) as usize;
        let mut values = vec![0.0; cells];
        values[idx] = 1.0 / dx;
        Ok(Self {
            origin,
            length,
            values,
            time: 0.0,
        })
    }

    pub fn uniform(origin: f64, length: f64, cells: usize) -> Result<Self> {
        if !(length > 0.0) || cells < 4 {
            return Err(Error::InvalidConfig("need length > 0 and at least 4 cells".into()));
        }
        Ok(Self {
            origin,
            length,
            values: vec![1.0 / length; cells],
            time: 0.0,
        })
    }

    /// Mean and variance of the density around the circular mean taken as
    /// the cell of maximal mass (adequate for well-localized densities).
    pub fn variance(&self) -> f64 {
        let dx = self.cell_width();
        let m = self.cells();
        let peak = (0..m)
            .max_by(|&i, &j| self.values[i].partial_cmp(&self.values[j]).unwrap())
            .unwrap();
        let mut mean = 0.0;
        let mut mass = 0.0;
        let offset = |i: usize| {
            let mut d = (i as f64 - peak as f64) * dx;
            if d > self.length / 2.0 {
                d -= self.length;
            }
            if d < -self.length / 2.0 {
                d += self.length;
            }
            d
        };
        for i in 0..m {
            let p = self.values[i] * dx;
            mean += p * offset(i);
            mass += p;
        }
        mean /= mass;
        let mut var = 0.0;
        for i in 0..m {
            var += self.values[i] * dx * (offset(i) - mean).powi(2);
        }
        var / mass
    }
}

/// Concentration diagnostics of a density.
#[derive(Debug, Clone, Copy)]
pub struct DensityStats {
    pub max_mass: f64,
    pub entropy: f64,
    pub support_fraction: f64,
}

/// Max single-cell mass, Shannon entropy of the cell masses, and the
/// fraction of cells holding more than `threshold` mass.
pub fn density_stats(field: &KernelField, threshold: f64) -> DensityStats {
    let dx = field.cell_width();
    let total = field.mass();
    let mut max_mass: f64 = 0.0;
    let mut entropy = 0.0;
    let mut above = 0usize;
    for &v in &field.values {
        let p = v * dx / total;
        max_mass = max_mass.max(p);
        if p > 0.0 {
            entropy -= p * p.ln();
        }
        if p > threshold {
            above += 1;
        }
    }
    DensityStats {
        max_mass,
        entropy,
        support_fraction: above as f64 / field.cells() as f64,
    }
}

/// Periodized spectral synthesis of the common field: unit-rate Gaussian
/// field with covariance `psi(n(x-y))`, resampled independently each step
/// (the field is white in time).
pub struct SpectralField {
    length: f64,
    cells: usize,
    sigma: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    /// Field values at the cell faces `origin + i dx`.
    pub values: Vec<f64>,
}

impl SpectralField {
    pub fn new(scaled: &ScaledModel<f64>, length: f64, cells: usize) -> Result<Self> {
        if !matches!(scaled.base.kind, CovarianceKind::Gaussian) {
            return Err(Error::UnsupportedSpectral {
                kind: scaled.base.kind.name().to_string(),
            });
        }
        let an = scaled.base.a * f64::from(scaled.n);
        // spectral density of psi(n z) is sqrt(pi)/(a n) exp(-k^2/(4 a^2 n^2))
        let k_max = 9.0 * an;
        let jmax = (k_max * length / (2.0 * std::f64::consts::PI)).ceil() as usize;
        if 2 * jmax + 2 > cells {
            return Err(Error::InvalidConfig(format!(
                "grid too coarse for the field spectrum: need at least {} cells",
                2 * jmax + 2
            )));
        }
        let mut sigma = Vec::with_capacity(jmax + 1);
        let spec = |k: f64| std::f64::consts::PI.sqrt() / an * (-k * k / (4.0 * an * an)).exp();
        sigma.push((spec(0.0) / length).sqrt());
        for j in 1..=jmax {
            let k = 2.0 * std::f64::consts::PI * j as f64 / length;
            sigma.push((2.0 * spec(k) / length).sqrt());
        }
        let fft = FftPlanner::new().plan_fft_inverse(cells);
        Ok(Self {
            length,
            cells,
            sigma,
            fft,
            buf: vec![Complex64::new(0.0, 0.0); cells],
            values: vec![0.0; cells],
        })
    }

    /// Draw a fresh field realization into `values`.
    pub fn resample<R: Rng>(&mut self, rng: &mut R) {
        self.buf.fill(Complex64::new(0.0, 0.0));
        let xi0: f64 = StandardNormal.sample(rng);
        self.buf[0] = Complex64::new(self.sigma[0] * xi0, 0.0);
        for j in 1..self.sigma.len() {
            let xi: f64 = StandardNormal.sample(rng);
            let eta: f64 = StandardNormal.sample(rng);
            let c = Complex64::new(xi, eta) * (self.sigma[j] * 0.5);
            self.buf[j] = c;
            self.buf[self.cells - j] = c.conj();
        }
        self.fft.process(&mut self.buf);
        for (v, c) in self.values.iter_mut().zip(&self.buf) {
            *v = c.re;
        }
    }

    /// Linear interpolation of the field at position `x` (periodic; `x`
    /// relative to the grid origin).
    pub fn at(&self, x: f64) -> f64 {
        let m = self.cells as f64;
        let pos = (x / self.length).rem_euclid(1.0) * m;
        let i = pos.floor() as usize % self.cells;
        let frac = pos - pos.floor();
        let j = (i + 1) % self.cells;
        self.values[i] * (1.0 - frac) + self.values[j] * frac
    }
}

/// Diagnostics from an SPDE run.
#[derive(Debug, Clone, Copy)]
pub struct SpdeDiagnostics {
    pub steps: usize,
    /// Relative mass change over the run, measured before renormalization.
    pub mass_drift: f64,
    /// Fraction of cell-steps clipped for negativity.
    pub clipped_fraction: f64,
}

/// Advance the density by the advection-diffusion SPDE
/// `dv = -d/dy (v dW) + (1/2)(b^2/n^2 + 1) d2v/dy2 dt`
/// with an explicit scheme: conservative central flux for the stochastic
/// term (mass conserved to round-off), explicit diffusion.
///
/// `with_noise = false` disables the field and leaves the pure heat
/// equation. Fails up front if the diffusion number `D dt/dx^2` exceeds 1/4.
pub fn spde_evolve(
    field: &mut KernelField,
    scaled: &ScaledModel<f64>,
    horizon: f64,
    dt: f64,
    seed: u64,
    with_noise: bool,
) -> Result<SpdeDiagnostics> {
    if !(horizon > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidConfig("need horizon > 0 and dt > 0".into()));
    }
    let m = field.cells();
    let dx = field.cell_width();
    let diffusion = 0.5 * (1.0 + scaled.beta());
    let r = diffusion * dt / (dx * dx);
    if r > 0.25 {
        return Err(Error::CflViolation { diffusion_number: r });
    }
    let steps = (horizon / dt).round().max(1.0) as usize;
    let mut rng = substream(seed, "kernel-field", 0);
    let mut spectral = if with_noise {
        Some(SpectralField::new(scaled, field.length, m)?)
    } else {
        None
    };
    let sqrt_dt = dt.sqrt();
    let mass0 = field.mass();
    let mut next = vec![0.0; m];
    let mut clipped = 0usize;
    for step in 1..=steps {
        let v = &field.values;
        if let Some(sf) = spectral.as_mut() {
            sf.resample(&mut rng);
            // face i sits between cells i-1 and i
            for i in 0..m {
                let ileft = (i + m - 1) % m;
                let iright = (i + 1) % m;
                let w_l = sqrt_dt * sf.values[i];
                let w_r = sqrt_dt * sf.values[iright];
                let flux_l = w_l * 0.5 * (v[ileft] + v[i]);
                let flux_r = w_r * 0.5 * (v[i] + v[iright]);
                next[i] = v[i] - (flux_r - flux_l) / dx
                    + r * (v[iright] - 2.0 * v[i] + v[ileft]);
            }
        } else {
            for i in 0..m {
                let ileft = (i + m - 1) % m;
                let iright = (i + 1) % m;
                next[i] = v[i] + r * (v[iright] - 2.0 * v[i] + v[ileft]);
            }
        }
        let neg = next.iter().filter(|&&x| x < 0.0).count();
        if neg > 0 {
            clipped += neg;
            for x in next.iter_mut() {
                if *x < 0.0 {
                    *x = 0.0;
                }
            }
            let mass = next.iter().sum::<f64>() * dx;
            if mass > 0.0 {
                let scale = mass0 / mass;
                for x in next.iter_mut() {
                    *x *= scale;
                }
            }
        }
        std::mem::swap(&mut field.values, &mut next);
        field.time += dt;
        if field.values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { step });
        }
    }
    Ok(SpdeDiagnostics {
        steps,
        mass_drift: (field.mass() - mass0).abs() / mass0,
        clipped_fraction: clipped as f64 / (steps * m) as f64,
    })
}

/// Empirical kernel by filtering: one shared field realization, `particles`
/// independent Brownian perturbations, endpoint histogram on a `cells`-cell
/// grid over `[x0 - length/2, x0 + length/2)`.
///
/// Using the same `seed`, grid and `dt` as `spde_evolve` reproduces the same
/// field realization, so the two estimates of the kernel can be compared
/// directly.
pub fn filter_kernel(
    scaled: &ScaledModel<f64>,
    x0: f64,
    horizon: f64,
    particles: usize,
    cells: usize,
    length: f64,
    dt: f64,
    seed: u64,
) -> Result<KernelField> {
    if particles == 0 || !(horizon > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidConfig("need particles >= 1, horizon > 0, dt > 0".into()));
    }
    let origin = x0 - length / 2.0;
    let mut spectral = SpectralField::new(scaled, length, cells)?;
    let mut field_rng = substream(seed, "kernel-field", 0);
    let steps = (horizon / dt).round().max(1.0) as usize;
    let sqrt_dt = dt.sqrt();
    let indep = scaled.b / f64::from(scaled.n) * sqrt_dt;

    const CHUNKS: usize = 64;
    let chunk = particles.div_ceil(CHUNKS);
    let mut positions = vec![x0; particles];
    let mut rngs: Vec<_> = (0..CHUNKS)
        .map(|c| substream(seed, "kernel-particles", c as u64))
        .collect();
    for _ in 0..steps {
        spectral.resample(&mut field_rng);
        let sf = &spectral;
        positions
            .par_chunks_mut(chunk)
            .zip(rngs.par_iter_mut())
            .for_each(|(xs, rng)| {
                for x in xs {
                    let w = sf.at(*x - origin);
                    let xi: f64 = StandardNormal.sample(rng);
                    *x += sqrt_dt * w + indep * xi;
                }
            });
    }
    let dx = length / cells as f64;
    let mut values = vec![0.0; cells];
    for &x in &positions {
        let idx = (((x - origin) / dx).floor() as i64).rem_euclid(cells as i64) as usize;
        values[idx] += 1.0;
    }
    let norm = 1.0 / (particles as f64 * dx);
    for v in &mut values {
        *v *= norm;
    }
    Ok(KernelField {
        origin,
        length,
        values,
        time: horizon,
    })
}

/// Pearson correlation of two densities on matching grids.
pub fn bin_correlation(a: &KernelField, b: &KernelField) -> Result<f64> {
    if a.cells() != b.cells() {
        return Err(Error::InvalidConfig("grids differ".into()));
    }
    let m = a.cells() as f64;
    let ma = a.values.iter().sum::<f64>() / m;
    let mb = b.values.iter().sum::<f64>() / m;
    let mut num = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.values.iter().zip(&b.values) {
        num += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::DegenerateHistogram("constant density in correlation".into()));
    }
    Ok(num / (va * vb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::CovarianceModel;
    use approx::assert_relative_eq;

    fn model(a: f64, n: u32, b: f64) -> ScaledModel<f64> {
        ScaledModel::new(CovarianceModel::gaussian(a).unwrap(), n, b).unwrap()
    }

    #[test]
    fn density_stats_anchors() {
        let u = KernelField::uniform(0.0, 1.0, 64).unwrap();
        let s = density_stats(&u, 0.5);
        assert_relative_eq!(s.entropy, 64.0f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(s.max_mass, 1.0 / 64.0, epsilon = 1e-12);
        assert_relative_eq!(s.support_fraction, 0.0);

        let p = KernelField::point_mass(0.3, 0.0, 1.0, 64).unwrap();
        let s = density_stats(&p, 0.5);
        assert_eq!(s.entropy, 0.0);
        assert_relative_eq!(s.max_mass, 1.0);
    }

    #[test]
    fn spectral_field_unit_variance_and_covariance() {
        let m = model(2.0, 1, 0.5);
        let mut sf = SpectralField::new(&m, 8.0, 256).unwrap();
        let mut rng = crate::rng::substream(1, "sf-test", 0);
        let reps = 4000;
        let mut v0 = 0.0;
        let mut c = 0.0;
        let lag_cells = 8; // 8 * dx = 0.25
        for _ in 0..reps {
            sf.resample(&mut rng);
            v0 += sf.values[10] * sf.values[10];
            c += sf.values[10] * sf.values[10 + lag_cells];
        }
        let dx = 8.0 / 256.0;
        let expect = m.psi_scaled(lag_cells as f64 * dx);
        assert_relative_eq!(v0 / reps as f64, 1.0, max_relative = 0.05);
        assert_relative_eq!(c / reps as f64, expect, max_relative = 0.1);
    }

    #[test]
    fn heat_equation_variance() {
        let m = model(2.0, 1, 0.5);
        let mut field = KernelField::point_mass(0.0, -6.0, 12.0, 512).unwrap();
        let dt = 1e-4;
        let horizon = 0.5;
        let diag = spde_evolve(&mut field, &m, horizon, dt, 1, false).unwrap();
        assert!(diag.clipped_fraction == 0.0);
        let expect = (1.0 + m.beta()) * horizon;
        assert_relative_eq!(field.variance(), expect, max_relative = 0.01);
    }

    #[test]
    fn cfl_violation_rejected() {
        let m = model(2.0, 1, 0.5);
        let mut field = KernelField::uniform(0.0, 4.0, 128).unwrap();
        assert!(matches!(
            spde_evolve(&mut field, &m, 1.0, 0.1, 1, false),
            Err(Error::CflViolation { .. })
        ));
    }

    #[test]
    fn mass_conserved_with_noise() {
        let m = model(4.0, 1, 0.5);
        let mut field = KernelField::point_mass(0.0, -3.0, 6.0, 512).unwrap();
        let diag = spde_evolve(&mut field, &m, 0.2, 5e-5, 9, true).unwrap();
        assert!(diag.mass_drift < 1e-10, "drift {}", diag.mass_drift);
        assert_relative_eq!(field.mass(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn tower_property_variance() {
        // pooled endpoints across field seeds sample the one-particle law,
        // Normal(x0, (1 + b^2/n^2) t). A sizeable independent-noise
        // coefficient makes particles within a seed decorrelate early, so the
        // pooled estimator is not dominated by the shared seed-mean term.
        let m = model(4.0, 1, 2.0);
        let t = 0.1;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let mut count = 0.0;
        for seed in 0..40 {
            let k = filter_kernel(&m, 0.0, t, 1000, 256, 8.0, 2e-4, seed).unwrap();
            let dx = k.cell_width();
            for (i, &v) in k.values.iter().enumerate() {
                let x = k.origin + (i as f64 + 0.5) * dx - 0.0;
                let p = v * dx;
                sum += p * x;
                sumsq += p * x * x;
                count += p;
            }
        }
        let mean = sum / count;
        let var = sumsq / count - mean * mean;
        let expect = (1.0 + m.beta()) * t;
        assert_relative_eq!(var, expect, max_relative = 0.05);
    }

    #[test]
    fn filter_matches_spde_on_shared_field() {
        let m = model(4.0, 1, 0.5);
        let t = 0.2;
        let dt = 5e-5;
        let cells = 256;
        let length = 6.0;
        let seed = 31;
        let filtered = filter_kernel(&m, 0.0, t, 40_000, cells, length, dt, seed).unwrap();
        let mut grid = KernelField::point_mass(0.0, -3.0, length, cells).unwrap();
        spde_evolve(&mut grid, &m, t, dt, seed, true).unwrap();
        let corr = bin_correlation(&filtered, &grid).unwrap();
        assert!(corr > 0.8, "correlation {corr}");
    }

    #[test]
    fn strong_independent_noise_looks_gaussian() {
        // with b/n large the independent noise dominates the common field
        let m = model(1.0, 1, 20.0);
        let t = 0.01;
        let k = filter_kernel(&m, 0.0, t, 20_000, 128, 30.0, 1e-4, 5).unwrap();
        let expect = (1.0 + m.beta()) * t;
        assert_relative_eq!(k.variance(), expect, max_relative = 0.1);
    }
}
