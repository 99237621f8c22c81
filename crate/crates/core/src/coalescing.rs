//! Coalescing Brownian motions: ordered systems that merge on meeting, with
//! Brownian-bridge crossing detection between grid points, and the cubic
//! splitting-probability estimate for a three-path system.

use crate::error::{Error, Result};
use crate::npoint::Path;
use crate::rng::substream;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// A system of coalescing Brownian motions with ordered starts.
#[derive(Debug, Clone)]
pub struct CoalescingSystem {
    /// Starting points, non-increasing.
    pub starts: Vec<f64>,
    pub dt: f64,
    pub seed: u64,
}

/// A merge: paths `upper` and `lower` became identical at `time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeEvent {
    pub time: f64,
    pub upper: usize,
    pub lower: usize,
}

impl CoalescingSystem {
    pub fn validate(&self) -> Result<()> {
        if self.starts.is_empty() || !(self.dt > 0.0) {
            return Err(Error::InvalidConfig("need starts and dt > 0".into()));
        }
        if self.starts.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidConfig("starts must be non-increasing".into()));
        }
        Ok(())
    }
}

/// Probability that a Brownian bridge between gap values `g >= 0` and
/// `g' >= 0` (gap variance rate 2) touches 0 within a step of length `dt`.
fn bridge_crossing_probability(g: f64, g_next: f64, dt: f64) -> f64 {
    if g <= 0.0 || g_next <= 0.0 {
        return 1.0;
    }
    (-g * g_next / dt).exp()
}

/// Simulate the coalescing system on its grid up to `horizon`.
///
/// Between grid points a merge fires either on an observed crossing or with
/// the Brownian-bridge crossing probability, which removes the O(sqrt(dt))
/// under-detection bias of sign checks. Merged paths share one driving
/// motion from then on, so merging is absorbing and order is preserved
/// exactly.
pub fn simulate_coalescing(
    sys: &CoalescingSystem,
    horizon: f64,
) -> Result<(Path, Vec<MergeEvent>)> {
    sys.validate()?;
    let n = sys.starts.len();
    let steps = (horizon / sys.dt).round().max(1.0) as usize;
    let sqrt_dt = sys.dt.sqrt();
    let mut rng = substream(sys.seed, "coalescing", 0);
    let mut x = sys.starts.clone();
    // rep[i]: index of the representative driving path (always <= i)
    let mut rep: Vec<usize> = (0..n).collect();
    // merge immediately coincident starts
    let mut merges = Vec::new();
    for i in 1..n {
        if x[i] == x[i - 1] {
            rep[i] = rep[i - 1];
            merges.push(MergeEvent {
                time: 0.0,
                upper: i - 1,
                lower: i,
            });
        }
    }
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(x.clone());
    let mut noise = vec![0.0; n];
    for step in 1..=steps {
        let t = step as f64 * sys.dt;
        let prev = x.clone();
        for i in 0..n {
            if rep[i] == i {
                noise[i] = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
            }
        }
        for i in 0..n {
            x[i] += noise[rep[i]];
        }
        for i in 1..n {
            if rep[i] == rep[i - 1] {
                continue;
            }
            let g = prev[i - 1] - prev[i];
            let g_next = x[i - 1] - x[i];
            let crossed = g_next <= 0.0
                || rng.gen::<f64>() < bridge_crossing_probability(g, g_next, 2.0 * sys.dt);
            if crossed {
                merges.push(MergeEvent {
                    time: t,
                    upper: i - 1,
                    lower: i,
                });
                let keep = rep[i - 1];
                let drop = rep[i];
                let v = x[i - 1];
                for j in 0..n {
                    if rep[j] == drop {
                        rep[j] = keep;
                        x[j] = v;
                    }
                }
            }
        }
        times.push(t);
        states.push(x.clone());
    }
    Ok((Path::new(times, states)?, merges))
}

/// Monte-Carlo estimate that in a three-path coalescing system started at
/// spread `r` (starts `r`, `r/2`, `0`), the middle path is still distinct
/// from both outer paths when the outer gap first reaches `R`.
pub fn splitting_probability(r: f64, big_r: f64, trials: u64, seed: u64) -> Result<(f64, f64)> {
    if r < 0.0 || !(big_r > 0.0) || r > big_r / 2.0 + 1e-12 {
        return Err(Error::InvalidConfig("need 0 <= r <= R/2".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidConfig("need trials >= 1".into()));
    }
    if r == 0.0 {
        return Ok((0.0, 0.0));
    }
    let chunks: u64 = 256;
    let per = trials / chunks;
    let rem = trials % chunks;
    let successes: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, "splitting", c);
            let todo = per + u64::from(c < rem);
            let mut hits = 0u64;
            for _ in 0..todo {
                if split_trial(r, big_r, &mut rng) {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    let p = successes as f64 / trials as f64;
    let se = (p * (1.0 - p) / trials as f64).sqrt();
    Ok((p, se))
}

/// One trial: evolve (upper, middle, lower) with adaptive steps until the
/// middle path merges (failure) or the outer gap reaches `big_r` (success).
fn split_trial<Rg: Rng>(r: f64, big_r: f64, rng: &mut Rg) -> bool {
    let mut x = [r, r / 2.0, 0.0];
    loop {
        let g_top = x[0] - x[1];
        let g_bot = x[1] - x[2];
        let span = x[0] - x[2];
        if span >= big_r {
            return true;
        }
        // resolve the smallest structure; the bridge correction keeps the
        // crossing law right even at coarse steps
        let scale = g_top.min(g_bot).min(big_r - span).max(big_r * 1e-6);
        let dt = (scale / 4.0).powi(2);
        let sqrt_dt = dt.sqrt();
        let prev = x;
        for v in &mut x {
            *v += sqrt_dt * rng.sample::<f64, _>(StandardNormal);
        }
        for pair in [(0usize, 1usize), (1, 2)] {
            let g = prev[pair.0] - prev[pair.1];
            let g_next = x[pair.0] - x[pair.1];
            if g_next <= 0.0 || rng.gen::<f64>() < bridge_crossing_probability(g, g_next, 2.0 * dt)
            {
                return false;
            }
        }
    }
}

/// One point of the splitting-probability curve.
#[derive(Debug, Clone, Copy)]
pub struct SplittingPoint {
    pub ratio: f64,
    pub estimate: f64,
    pub stderr: f64,
}

/// Estimate the curve over the given `r/R` ratios at fixed `R = 1`.
pub fn splitting_curve(ratios: &[f64], trials: u64, seed: u64) -> Result<Vec<SplittingPoint>> {
    ratios
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            let (p, se) = splitting_probability(q, 1.0, trials, seed.wrapping_add(i as u64))?;
            Ok(SplittingPoint {
                ratio: q,
                estimate: p,
                stderr: se,
            })
        })
        .collect()
}

/// Weighted least-squares fit of `ln p = slope ln(r/R) + c` with
/// Monte-Carlo weights; returns (slope, slope standard error).
pub fn fit_splitting_exponent(points: &[SplittingPoint]) -> Result<(f64, f64)> {
    let usable: Vec<_> = points.iter().filter(|p| p.estimate > 0.0).collect();
    if usable.len() < 2 {
        return Err(Error::DegenerateHistogram(
            "need at least two positive splitting estimates".into(),
        ));
    }
    let mut sw = 0.0;
    let mut swx = 0.0;
    let mut swy = 0.0;
    let mut swxx = 0.0;
    let mut swxy = 0.0;
    for p in &usable {
        let w = (p.estimate / p.stderr).powi(2); // 1 / var(ln p)
        let x = p.ratio.ln();
        let y = p.estimate.ln();
        sw += w;
        swx += w * x;
        swy += w * y;
        swxx += w * x * x;
        swxy += w * x * y;
    }
    let det = sw * swxx - swx * swx;
    if det <= 0.0 {
        return Err(Error::DegenerateHistogram("singular exponent fit".into()));
    }
    let slope = (sw * swxy - swx * swy) / det;
    let slope_se = (sw / det).sqrt();
    Ok((slope, slope_se))
}
