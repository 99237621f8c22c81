//! Reference one-dimensional sticky Brownian motion, built as a time-changed
//! Brownian motion for the speed measure `dz + theta^{-1} delta_0`.
//!
//! With natural scale `s(z) = z` and speed measure `m`, the diffusion is
//! `Z(t) = B(A^{-1}(t))` with clock `A(u) = (u + theta^{-1} L^0_u(B)) / 2`;
//! away from 0 it is a Brownian motion run at variance rate 2, matching the
//! two-point difference process it is the limit of.

use crate::error::{Error, Result};
use crate::npoint::Path;
use crate::rng::substream;
use rand_distr::{Distribution, StandardNormal};

/// Parameters of one sticky simulation.
#[derive(Debug, Clone, Copy)]
pub struct StickyParams {
    /// Stickiness (units 1/length); larger theta = less sticky.
    pub theta: f64,
    pub z0: f64,
    pub horizon: f64,
    /// Grid step of the driving Brownian motion.
    pub dt: f64,
    pub seed: u64,
}

impl StickyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0) {
            return Err(Error::InvalidConfig("theta must be > 0".into()));
        }
        if !(self.dt > 0.0) || !(self.horizon > 0.0) {
            return Err(Error::InvalidConfig("need dt > 0 and horizon > 0".into()));
        }
        Ok(())
    }

    /// The resolution guideline sqrt(dt) << 1/theta.
    pub fn resolves_sticky_scale(&self) -> bool {
        self.dt.sqrt() * self.theta <= 0.1
    }
}

/// Simulate a sticky path on the output grid `dt_out`, flagging the exact
/// zero set.
///
/// The driving Brownian motion runs on the grid `params.dt`; its local time
/// accrues through the Tanaka estimator `|B_{j+1}| - |B_j| - sgn(B_j) dB_j`,
/// which is nonnegative and charges only crossing steps. Output times whose
/// inverse clock lands in the local-time part of a step are emitted as exact
/// zeros with `at_zero` set.
pub fn simulate_sticky(params: &StickyParams, dt_out: f64) -> Result<Path> {
    params.validate()?;
    if !(dt_out > 0.0) || dt_out > params.horizon {
        return Err(Error::InvalidConfig("need 0 < dt_out <= horizon".into()));
    }
    let mut rng = substream(params.seed, "sticky-ref", 0);
    let dt = params.dt;
    let sqrt_dt = dt.sqrt();
    let inv_theta = 1.0 / params.theta;

    let out_steps = (params.horizon / dt_out).round().max(1.0) as usize;
    let mut times = Vec::with_capacity(out_steps + 1);
    let mut states = Vec::with_capacity(out_steps + 1);
    let mut flags = Vec::with_capacity(out_steps + 1);
    times.push(0.0);
    states.push(vec![params.z0]);
    flags.push(params.z0 == 0.0);

    let budget = ((2.0 * params.horizon / dt) * 10.0) as usize + 1_000_000;
    let mut b_cur = params.z0;
    let mut clock = 0.0;
    let mut emitted = 0usize;
    for _ in 0..budget {
        if emitted >= out_steps {
            break;
        }
        let eps: f64 = StandardNormal.sample(&mut rng);
        let b_next = b_cur + sqrt_dt * eps;
        let sgn = if b_cur >= 0.0 { 1.0 } else { -1.0 };
        let dl = b_next.abs() - b_cur.abs() - sgn * (b_next - b_cur);
        // clock increment: diffusive part first, then the local-time plateau
        let da_diff = dt / 2.0;
        let da_zero = inv_theta * dl / 2.0;
        while emitted < out_steps {
            let target = (emitted + 1) as f64 * dt_out;
            let da = da_diff + da_zero;
            if clock + da < target {
                break;
            }
            let offset = target - clock;
            if offset < da_diff {
                let frac = offset / da_diff;
                states.push(vec![b_cur + frac * (b_next - b_cur)]);
                flags.push(false);
            } else {
                states.push(vec![0.0]);
                flags.push(true);
            }
            times.push(target);
            emitted += 1;
        }
        clock += da_diff + da_zero;
        b_cur = b_next;
    }
    if emitted < out_steps {
        return Err(Error::StepBudget { budget });
    }
    let mut path = Path::new(times, states)?;
    path.at_zero = Some(flags);
    Ok(path)
}

/// Lebesgue time the path spends in `[-delta, delta]`, and the fraction of
/// time flagged as exactly at 0.
///
/// For `delta = 0` the band time also comes from the exact-zero flags.
pub fn occupation_statistics(path: &Path, delta: f64) -> Result<(f64, f64)> {
    if delta < 0.0 {
        return Err(Error::InvalidConfig("delta must be >= 0".into()));
    }
    let m = path.len();
    if m < 2 {
        return Err(Error::InvalidConfig("path too short".into()));
    }
    let mut band = 0.0;
    let mut zero = 0.0;
    let total = path.times[m - 1] - path.times[0];
    for k in 1..m {
        let dt = path.times[k] - path.times[k - 1];
        let z = path.states[k][0];
        let flagged = path.at_zero.as_ref().is_some_and(|f| f[k]);
        if flagged {
            zero += dt;
        }
        if z.abs() <= delta || (delta == 0.0 && flagged) {
            band += dt;
        }
    }
    Ok((band, zero / total))
}
