//! Cells of R^N, the direction vectors v_{I,J}, piecewise-linear test
//! functions, and the operator of the martingale problem.
//!
//! A cell is indexed by a weak total ordering of the coordinates; R^3 has
//! thirteen of them, and in general the count is the ordered Bell number.
//! Equality of coordinates is exact (bit equality) in the combinatorial
//! routines; simulation-facing entry points take a clustering tolerance
//! supplied by the caller, since discretized paths never realize exact ties.

use crate::error::{Error, Result};
use crate::npoint::Path;
use crate::theta::ThetaFamily;
use std::collections::HashMap;

/// Largest N for which full cell enumeration is allowed.
pub const MAX_CELL_N: usize = 8;

/// A weak total ordering of {0..N-1}: `ranks[i]` is the block index of
/// coordinate i, blocks ordered from lowest coordinate value to highest.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    ranks: Vec<u8>,
    num_blocks: u8,
}

impl Cell {
    /// Build from a rank map; normalizes nothing, so ranks must already be
    /// surjective onto `0..m`.
    pub fn from_ranks(ranks: Vec<u8>) -> Result<Self> {
        let m = ranks.iter().copied().max().map_or(0, |r| r + 1);
        let mut seen = vec![false; m as usize];
        for &r in &ranks {
            seen[r as usize] = true;
        }
        if ranks.is_empty() || seen.iter().any(|s| !s) {
            return Err(Error::InvalidConfig("ranks must be surjective onto 0..m".into()));
        }
        Ok(Self { ranks, num_blocks: m })
    }

    pub fn n(&self) -> usize {
        self.ranks.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.num_blocks as usize
    }

    pub fn rank(&self, i: usize) -> usize {
        self.ranks[i] as usize
    }

    /// Blocks in increasing order of coordinate value.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut blocks = vec![Vec::new(); self.num_blocks()];
        for (i, &r) in self.ranks.iter().enumerate() {
            blocks[r as usize].push(i);
        }
        blocks
    }

    /// A point inside the cell: coordinate value = block rank.
    pub fn representative(&self) -> Vec<f64> {
        self.ranks.iter().map(|&r| f64::from(r)).collect()
    }

    /// Generic points of the cell, enough to pin down an affine function on
    /// its closure; `trial` varies the block values deterministically.
    pub fn sample_point(&self, trial: usize) -> Vec<f64> {
        self.ranks
            .iter()
            .map(|&r| {
                let r = f64::from(r);
                let jitter = ((trial as f64 + 1.0) * (r + 1.0) * 0.7368).sin() * 0.31;
                r + jitter
            })
            .collect()
    }

    /// The coarser cell obtained by merging adjacent blocks `r` and `r+1`.
    pub fn merge_adjacent(&self, r: usize) -> Cell {
        let ranks = self
            .ranks
            .iter()
            .map(|&b| if (b as usize) > r { b - 1 } else { b })
            .collect();
        Cell {
            ranks,
            num_blocks: self.num_blocks - 1,
        }
    }

    /// The finer cell obtained by splitting block `r` into a lower part
    /// `lower` and the rest of the block above it.
    fn split_block(&self, r: usize, lower: &[usize]) -> Cell {
        let ranks = self
            .ranks
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                let b = b as usize;
                let shifted = if b > r { b + 1 } else { b };
                if b == r && !lower.contains(&i) {
                    (r + 1) as u8
                } else {
                    shifted as u8
                }
            })
            .collect();
        Cell {
            ranks,
            num_blocks: self.num_blocks + 1,
        }
    }

    /// Human-readable ordering like `x1<x2=x3`.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        for (bi, block) in self.blocks().iter().enumerate() {
            if bi > 0 {
                s.push('<');
            }
            for (j, i) in block.iter().enumerate() {
                if j > 0 {
                    s.push('=');
                }
                s.push_str(&format!("x{}", i + 1));
            }
        }
        s
    }
}

/// The unique cell containing `x`; exact coordinate equality maps to the
/// equality block.
pub fn cell_of(x: &[f64]) -> Cell {
    cell_of_clustered(x, 0.0)
}

/// Cell of `x` after single-linkage clustering of coordinates with gap
/// tolerance `delta` (`delta = 0` reproduces exact ties).
pub fn cell_of_clustered(x: &[f64], delta: f64) -> Cell {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| x[i].partial_cmp(&x[j]).unwrap());
    let mut ranks = vec![0u8; n];
    let mut rank = 0u8;
    for w in 0..n {
        if w > 0 && x[order[w]] - x[order[w - 1]] > delta {
            rank += 1;
        }
        ranks[order[w]] = rank;
    }
    Cell {
        ranks,
        num_blocks: rank + 1,
    }
}

/// Complete, duplicate-free enumeration of the cells of R^N.
pub fn enumerate_cells(n: usize) -> Result<Vec<Cell>> {
    if n == 0 || n > MAX_CELL_N {
        return Err(Error::CellBudget { n, max: MAX_CELL_N });
    }
    // insert coordinates one at a time: into an existing block, or as a new
    // block in any gap
    let mut cells = vec![Cell {
        ranks: vec![0],
        num_blocks: 1,
    }];
    for i in 1..n {
        let mut next = Vec::new();
        for c in &cells {
            let m = c.num_blocks as usize;
            for r in 0..m {
                let mut ranks = c.ranks.clone();
                ranks.push(r as u8);
                next.push(Cell {
                    ranks,
                    num_blocks: c.num_blocks,
                });
            }
            for gap in 0..=m {
                let mut ranks: Vec<u8> = c
                    .ranks
                    .iter()
                    .map(|&b| if (b as usize) >= gap { b + 1 } else { b })
                    .collect();
                ranks.push(gap as u8);
                next.push(Cell {
                    ranks,
                    num_blocks: c.num_blocks + 1,
                });
            }
        }
        let _ = i;
        cells = next;
    }
    Ok(cells)
}

/// The vector v_{I,J}: +1 on I, -1 on J, 0 elsewhere.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectionVector {
    pub i_set: Vec<usize>,
    pub j_set: Vec<usize>,
    pub n: usize,
}

impl DirectionVector {
    pub fn components(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.n];
        for &i in &self.i_set {
            v[i] = 1.0;
        }
        for &j in &self.j_set {
            v[j] = -1.0;
        }
        v
    }
}

/// The set V(x): for each block of the coincidence partition of `x`, every
/// ordered bipartition (I, J) of that block.
pub fn vectors_at(x: &[f64]) -> Vec<DirectionVector> {
    vectors_at_cell(&cell_of(x))
}

pub fn vectors_at_cell(cell: &Cell) -> Vec<DirectionVector> {
    let mut out = Vec::new();
    for block in cell.blocks() {
        let m = block.len();
        if m < 2 {
            continue;
        }
        for mask in 1..((1u32 << m) - 1) {
            let mut i_set = Vec::new();
            let mut j_set = Vec::new();
            for (bit, &idx) in block.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    i_set.push(idx);
                } else {
                    j_set.push(idx);
                }
            }
            out.push(DirectionVector {
                i_set,
                j_set,
                n: cell.n(),
            });
        }
    }
    out
}

/// A continuous function on R^N that is affine on every cell: per-cell
/// gradient and offset.
#[derive(Debug, Clone)]
pub struct PiecewiseLinearFn {
    n: usize,
    pieces: HashMap<Cell, (Vec<f64>, f64)>,
    shift_invariant: bool,
}

impl PiecewiseLinearFn {
    /// Build from per-cell affine data, validating continuity on all faces
    /// between a cell and each of its adjacent-merge coarsenings.
    pub fn from_pieces(n: usize, pieces: HashMap<Cell, (Vec<f64>, f64)>) -> Result<Self> {
        let all = enumerate_cells(n)?;
        for c in &all {
            if !pieces.contains_key(c) {
                return Err(Error::InvalidConfig(format!(
                    "missing affine piece for cell {}",
                    c.describe()
                )));
            }
        }
        let f = Self {
            n,
            pieces,
            shift_invariant: false,
        };
        f.validate_continuity()?;
        Ok(f.detect_shift_invariance())
    }

    fn validate_continuity(&self) -> Result<()> {
        for (c, piece) in &self.pieces {
            for r in 0..c.num_blocks().saturating_sub(1) {
                let face = c.merge_adjacent(r);
                let face_piece = &self.pieces[&face];
                for trial in 0..=self.n {
                    let x = face.sample_point(trial);
                    let v1 = affine_eval(piece, &x);
                    let v2 = affine_eval(face_piece, &x);
                    if (v1 - v2).abs() > 1e-12 * (1.0 + v1.abs().max(v2.abs())) {
                        return Err(Error::InvalidConfig(format!(
                            "discontinuity between {} and {}: {v1} vs {v2}",
                            c.describe(),
                            face.describe()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn detect_shift_invariance(mut self) -> Self {
        let grads_balanced = self
            .pieces
            .values()
            .all(|(g, _)| g.iter().sum::<f64>().abs() <= 1e-12);
        let diag = Cell::from_ranks(vec![0; self.n]).unwrap();
        let (dg, doff) = &self.pieces[&diag];
        let zero_on_diag = doff.abs() <= 1e-12 && dg.iter().sum::<f64>().abs() <= 1e-12;
        self.shift_invariant = grads_balanced && zero_on_diag;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn shift_invariant(&self) -> bool {
        self.shift_invariant
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        affine_eval(&self.pieces[&cell_of(x)], x)
    }

    pub fn gradient_in(&self, cell: &Cell) -> &[f64] {
        &self.pieces[cell].0
    }

    /// The hinge `f(x) = (min_{i in lower} x_i - max_{j in upper} x_j)^+`
    /// (positive when the `lower` group sits above the `upper` group).
    pub fn hinge(n: usize, lower: &[usize], upper: &[usize]) -> Result<Self> {
        if lower.is_empty() || upper.is_empty() || lower.iter().any(|i| upper.contains(i)) {
            return Err(Error::InvalidConfig("hinge needs disjoint nonempty groups".into()));
        }
        let mut pieces = HashMap::new();
        for c in enumerate_cells(n)? {
            let min_rank = lower.iter().map(|&i| c.rank(i)).min().unwrap();
            let max_rank = upper.iter().map(|&j| c.rank(j)).max().unwrap();
            let mut grad = vec![0.0; n];
            if min_rank > max_rank {
                let i_star = *lower.iter().filter(|&&i| c.rank(i) == min_rank).min().unwrap();
                let j_star = *upper.iter().filter(|&&j| c.rank(j) == max_rank).min().unwrap();
                grad[i_star] = 1.0;
                grad[j_star] = -1.0;
            }
            pieces.insert(c, (grad, 0.0));
        }
        Self::from_pieces(n, pieces)
    }

    /// `f(x) = |x_i - x_j|`.
    pub fn abs_diff(n: usize, i: usize, j: usize) -> Result<Self> {
        if i == j || i >= n || j >= n {
            return Err(Error::InvalidConfig("abs_diff needs distinct indices < n".into()));
        }
        let mut pieces = HashMap::new();
        for c in enumerate_cells(n)? {
            let mut grad = vec![0.0; n];
            if c.rank(i) > c.rank(j) {
                grad[i] = 1.0;
                grad[j] = -1.0;
            } else if c.rank(i) < c.rank(j) {
                grad[i] = -1.0;
                grad[j] = 1.0;
            }
            pieces.insert(c, (grad, 0.0));
        }
        Self::from_pieces(n, pieces)
    }

    /// Globally linear function `c . x + offset`.
    pub fn linear(coeffs: Vec<f64>, offset: f64) -> Result<Self> {
        let n = coeffs.len();
        let mut pieces = HashMap::new();
        for c in enumerate_cells(n)? {
            pieces.insert(c, (coeffs.clone(), offset));
        }
        Self::from_pieces(n, pieces)
    }
}

fn affine_eval(piece: &(Vec<f64>, f64), x: &[f64]) -> f64 {
    piece.0.iter().zip(x).map(|(g, v)| g * v).sum::<f64>() + piece.1
}

/// One-sided gradient of `f` at a point of `cell` in direction `v`: the
/// gradient of the affine piece of the cell entered by `x + eps v`, taken
/// symbolically (the destination cell splits the block I u J into J below I).
fn one_sided_gradient(f: &PiecewiseLinearFn, cell: &Cell, v: &DirectionVector) -> f64 {
    let r = cell.rank(v.i_set[0]);
    let dest = cell.split_block(r, &v.j_set);
    let grad = f.gradient_in(&dest);
    v.i_set.iter().map(|&i| grad[i]).sum::<f64>() - v.j_set.iter().map(|&j| grad[j]).sum::<f64>()
}

/// The operator: `sum_{v in V(x)} theta(|I|:|J|) grad_v f(x)`.
pub fn apply_operator(f: &PiecewiseLinearFn, x: &[f64], theta: &ThetaFamily) -> Result<f64> {
    apply_operator_on_cell(f, &cell_of(x), theta)
}

/// Operator evaluated on a cell directly (the value is constant on cells).
pub fn apply_operator_on_cell(
    f: &PiecewiseLinearFn,
    cell: &Cell,
    theta: &ThetaFamily,
) -> Result<f64> {
    let mut acc = 0.0;
    for v in vectors_at_cell(cell) {
        let t = theta.get(v.i_set.len(), v.j_set.len())?;
        acc += t * one_sided_gradient(f, cell, &v);
    }
    Ok(acc)
}

/// Simulation-facing operator: coordinates within `delta` (single linkage)
/// are treated as coincident.
pub fn apply_operator_clustered(
    f: &PiecewiseLinearFn,
    x: &[f64],
    theta: &ThetaFamily,
    delta: f64,
) -> Result<f64> {
    apply_operator_on_cell(f, &cell_of_clustered(x, delta), theta)
}

/// Result of the martingale-drift test.
#[derive(Debug, Clone, Copy)]
pub struct DriftStatistic {
    pub mean: f64,
    pub stderr: f64,
    pub z_score: f64,
    pub replicas: usize,
}

/// Monte-Carlo estimate of the mean of
/// `f(X(T)) - f(X(0)) - int_0^T A f(X(u)) du` over an ensemble of paths,
/// with the compensator evaluated on `delta`-clustered states; returns a
/// z-score that should be small in magnitude when the ensemble solves the
/// martingale problem for `theta`.
pub fn drift_test(
    paths: &[Path],
    f: &PiecewiseLinearFn,
    theta: &ThetaFamily,
    diagonal_tolerance: f64,
) -> Result<DriftStatistic> {
    if paths.is_empty() {
        return Err(Error::InvalidConfig("drift_test needs at least one path".into()));
    }
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for path in paths {
        let states = &path.states;
        let first = &states[0];
        let last = states.last().unwrap();
        let mut compensator = 0.0;
        for w in 0..states.len() - 1 {
            let dt = path.times[w + 1] - path.times[w];
            compensator += apply_operator_clustered(f, &states[w], theta, diagonal_tolerance)? * dt;
        }
        let v = f.eval(last) - f.eval(first) - compensator;
        sum += v;
        sumsq += v * v;
    }
    let n = paths.len() as f64;
    let mean = sum / n;
    let var = ((sumsq / n - mean * mean) * n / (n - 1.0).max(1.0)).max(0.0);
    let stderr = (var / n).sqrt();
    Ok(DriftStatistic {
        mean,
        stderr,
        z_score: if stderr > 0.0 { mean / stderr } else { 0.0 },
        replicas: paths.len(),
    })
}
