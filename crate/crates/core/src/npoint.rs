//! Prelimit N-point diffusions: Euler-Maruyama under the state-dependent
//! covariance `Sigma_ij = psi(n(x_i - x_j)) + (b^2/n^2) 1(i=j)`, either by
//! dense Cholesky factorization or through a shared random-Fourier field,
//! plus the exact time-change construction for the two-point difference.

use crate::covariance::{sample_field, ScaledModel};
use crate::error::{Error, Result};
use crate::rng::substream;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Driving-noise representation for `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Driver {
    /// Exact covariance, Cholesky factor per step.
    Dense,
    /// One shared random-Fourier field realization per step.
    Fourier { features: usize },
}

/// Parameters of one N-point simulation.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub scaled: ScaledModel<f64>,
    pub x0: Vec<f64>,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub driver: Driver,
}

impl SimConfig {
    pub fn n_coords(&self) -> usize {
        self.x0.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.x0.is_empty() {
            return Err(Error::InvalidConfig("need at least one coordinate".into()));
        }
        if !(self.dt > 0.0) || !(self.horizon > 0.0) || self.dt > self.horizon {
            return Err(Error::InvalidConfig("need 0 < dt <= horizon".into()));
        }
        if let Driver::Fourier { features } = self.driver {
            if features == 0 {
                return Err(Error::InvalidConfig("fourier driver needs features >= 1".into()));
            }
        }
        Ok(())
    }

    /// Whether dt resolves the O(1/n^2) sticky region (dt * n^2 <= 0.1).
    pub fn resolves_sticky_region(&self) -> bool {
        self.dt * f64::from(self.scaled.n).powi(2) <= 0.1 + 1e-12
    }
}

/// A simulated trajectory on a fixed time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub times: Vec<f64>,
    /// One state per grid time; inner length is the coordinate count.
    pub states: Vec<Vec<f64>>,
    /// Exact-zero flags maintained by the sticky reference simulator.
    pub at_zero: Option<Vec<bool>>,
}

impl Path {
    pub fn new(times: Vec<f64>, states: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != states.len() || times.is_empty() {
            return Err(Error::InvalidConfig("times/states length mismatch".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig("times must be strictly increasing".into()));
        }
        for (k, s) in states.iter().enumerate() {
            if s.len() != states[0].len() || s.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { step: k });
            }
        }
        Ok(Self {
            times,
            states,
            at_zero: None,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    /// Scalar view of a one-dimensional path.
    pub fn scalar_states(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|s| s[0])
    }
}

/// The one-step covariance matrix (row-major N x N).
pub fn step_covariance(scaled: &ScaledModel<f64>, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let beta = scaled.beta();
    let mut sigma = vec![0.0; n * n];
    for i in 0..n {
        sigma[i * n + i] = 1.0 + beta;
        for j in 0..i {
            let c = scaled.psi_scaled(x[i] - x[j]);
            sigma[i * n + j] = c;
            sigma[j * n + i] = c;
        }
    }
    sigma
}

/// Cholesky factor of `sigma + jitter * I`, escalating jitter in decades from
/// 0 up to `1e-8 * trace/N`; returns the factor and the jitter used.
pub fn factor_covariance(sigma: &[f64], n: usize) -> Result<(Vec<f64>, f64)> {
    let mut l = vec![0.0; n * n];
    let jitter = factor_covariance_into(sigma, n, &mut l)?;
    Ok((l, jitter))
}

/// Allocation-free variant of `factor_covariance` writing into `l`.
pub fn factor_covariance_into(sigma: &[f64], n: usize, l: &mut [f64]) -> Result<f64> {
    let trace: f64 = (0..n).map(|i| sigma[i * n + i]).sum();
    let max_jitter = 1e-8 * trace / n as f64;
    let mut jitter = 0.0;
    loop {
        if try_cholesky(sigma, n, jitter, l) {
            return Ok(jitter);
        }
        if jitter == 0.0 {
            jitter = max_jitter * 1e-8;
        } else if jitter >= max_jitter {
            return Err(Error::FactorizationFailed { max_jitter });
        } else {
            jitter = (jitter * 10.0).min(max_jitter);
        }
    }
}

fn try_cholesky(sigma: &[f64], n: usize, jitter: f64, l: &mut [f64]) -> bool {
    l.fill(0.0);
    for i in 0..n {
        for j in 0..=i {
            let mut s = sigma[i * n + j] + if i == j { jitter } else { 0.0 };
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return false;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    true
}

/// Per-coordinate noise streams for `simulate`; exposing them separately lets
/// callers permute streams along with initial coordinates.
pub fn coordinate_streams(seed: u64, n: usize) -> Vec<ChaCha8Rng> {
    (0..n).map(|i| substream(seed, "npoint-coord", i as u64)).collect()
}

/// One dense Euler-Maruyama step with reusable buffers; noise is consumed in
/// sorted-coordinate slots so that the step is exactly permutation
/// equivariant for distinct coordinates.
pub struct DenseStepper {
    scaled: ScaledModel<f64>,
    n: usize,
    order: Vec<usize>,
    xs: Vec<f64>,
    sigma: Vec<f64>,
    l: Vec<f64>,
    z: Vec<f64>,
}

impl DenseStepper {
    pub fn new(scaled: ScaledModel<f64>, n: usize) -> Self {
        Self {
            scaled,
            n,
            order: (0..n).collect(),
            xs: vec![0.0; n],
            sigma: vec![0.0; n * n],
            l: vec![0.0; n * n],
            z: vec![0.0; n],
        }
    }

    pub fn step(&mut self, x: &mut [f64], streams: &mut [ChaCha8Rng], sqrt_dt: f64) -> Result<()> {
        let n = self.n;
        self.order.sort_by(|&i, &j| x[i].partial_cmp(&x[j]).unwrap().then(i.cmp(&j)));
        for (s, &i) in self.order.iter().enumerate() {
            self.xs[s] = x[i];
        }
        let beta = self.scaled.beta();
        for i in 0..n {
            self.sigma[i * n + i] = 1.0 + beta;
            for j in 0..i {
                let c = self.scaled.psi_scaled(self.xs[i] - self.xs[j]);
                self.sigma[i * n + j] = c;
                self.sigma[j * n + i] = c;
            }
        }
        factor_covariance_into(&self.sigma, n, &mut self.l)?;
        for (s, &i) in self.order.iter().enumerate() {
            self.z[s] = StandardNormal.sample(&mut streams[i]);
        }
        for (s, &i) in self.order.iter().enumerate() {
            let mut d = 0.0;
            for t in 0..=s {
                d += self.l[s * n + t] * self.z[t];
            }
            x[i] += sqrt_dt * d;
        }
        Ok(())
    }
}

/// Euler-Maruyama path of the N-point prelimit diffusion.
pub fn simulate(config: &SimConfig) -> Result<Path> {
    let mut streams = coordinate_streams(config.seed, config.n_coords());
    simulate_with_streams(config, &mut streams)
}

/// As `simulate`, with caller-supplied per-coordinate noise streams.
///
/// With the dense driver, noise is consumed in sorted-coordinate slots, so
/// permuting `x0` together with `streams` permutes the path exactly.
pub fn simulate_with_streams(config: &SimConfig, streams: &mut [ChaCha8Rng]) -> Result<Path> {
    config.validate()?;
    let n = config.n_coords();
    if streams.len() != n {
        return Err(Error::InvalidConfig("one noise stream per coordinate".into()));
    }
    let steps = (config.horizon / config.dt).round().max(1.0) as usize;
    let dt = config.dt;
    let sqrt_dt = dt.sqrt();
    let mut x = config.x0.clone();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(x.clone());

    let mut field_rng = substream(config.seed, "npoint-field", 0);
    let mut field = match config.driver {
        Driver::Fourier { features } => Some(sample_field(&config.scaled, features, &mut field_rng)?),
        Driver::Dense => None,
    };
    // evaluating the field relative to the start centroid makes the fourier
    // driver exactly shift-equivariant, without changing the law
    let centroid = config.x0.iter().sum::<f64>() / n as f64;
    let indep = config.scaled.b / f64::from(config.scaled.n);

    let mut stepper = DenseStepper::new(config.scaled.clone(), n);
    for step in 1..=steps {
        match (&config.driver, field.as_mut()) {
            (Driver::Dense, _) => {
                stepper.step(&mut x, streams, sqrt_dt)?;
            }
            (Driver::Fourier { .. }, Some(f)) => {
                f.resample_amplitudes(&mut field_rng);
                for i in 0..n {
                    let xi: f64 = StandardNormal.sample(&mut streams[i]);
                    x[i] += sqrt_dt * (f.eval(x[i] - centroid) + indep * xi);
                }
            }
            (Driver::Fourier { .. }, None) => unreachable!(),
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step });
        }
        times.push(step as f64 * dt);
        states.push(x.clone());
    }
    Path::new(times, states)
}

/// Expected local time at 0 of a Brownian motion over a step of length `dt`,
/// conditioned on the endpoints: `erfc((|x|+|y|)/sqrt(2 dt)) / (2 phi_dt(y-x))`
/// in the occupation-density normalization. Exact in dt.
pub fn bridge_local_time(x: f64, y: f64, dt: f64) -> f64 {
    use crate::scalar::Scalar;
    let arg = (x.abs() + y.abs()) / (2.0 * dt).sqrt();
    let num = 0.5 * Scalar::erfc(arg);
    if num == 0.0 {
        return 0.0;
    }
    let d = y - x;
    let phi = (-d * d / (2.0 * dt)).exp() / (2.0 * std::f64::consts::PI * dt).sqrt();
    num / phi
}

/// The two-point difference `Z = X_1 - X_2` simulated exactly as a
/// time-changed Brownian motion: `Z(t) = B(tau_t)` with `tau` the inverse of
/// `F(u) = (1/2) int_0^u speed_density(B_s) ds`.
///
/// The clock is accumulated per step as the sum of an absolutely continuous
/// part `dt/(2(1+beta))` and a near-diagonal part proportional to the
/// conditionally exact Brownian-bridge local time, so the driving grid only
/// has to resolve the diffusive scale, not the O(1/n) speed-density spike.
pub fn two_point_difference_timechange(
    scaled: &ScaledModel<f64>,
    z0: f64,
    horizon: f64,
    dt_out: f64,
    seed: u64,
) -> Result<Path> {
    if !(horizon > 0.0) || !(dt_out > 0.0) || dt_out > horizon {
        return Err(Error::InvalidConfig("need 0 < dt_out <= horizon".into()));
    }
    let n = f64::from(scaled.n);
    let dt_b = 4.0 / (n * n);
    let beta = scaled.beta();
    let ac_rate = 1.0 / (2.0 * (1.0 + beta));
    let c_local = scaled.clock_local_time_coefficient()?;
    let sqrt_dt_b = dt_b.sqrt();
    let mut rng = substream(seed, "npoint-timechange", 0);

    let out_steps = (horizon / dt_out).round().max(1.0) as usize;
    let mut times = Vec::with_capacity(out_steps + 1);
    let mut states = Vec::with_capacity(out_steps + 1);
    times.push(0.0);
    states.push(vec![z0]);

    let budget = ((horizon / ac_rate / dt_b) * 10.0) as usize + 1_000_000;
    let mut b_cur = z0;
    let mut clock = 0.0;
    let mut emitted = 0usize;
    for _ in 0..budget {
        if emitted >= out_steps {
            break;
        }
        let eps: f64 = StandardNormal.sample(&mut rng);
        let b_next = b_cur + sqrt_dt_b * eps;
        let df = dt_b * ac_rate + c_local * bridge_local_time(b_cur, b_next, dt_b);
        while emitted < out_steps {
            let target = (emitted + 1) as f64 * dt_out;
            if clock + df < target {
                break;
            }
            let frac = ((target - clock) / df).clamp(0.0, 1.0);
            times.push(target);
            states.push(vec![b_cur + frac * (b_next - b_cur)]);
            emitted += 1;
        }
        clock += df;
        b_cur = b_next;
    }
    if emitted < out_steps {
        return Err(Error::StepBudget { budget });
    }
    Path::new(times, states)
}
