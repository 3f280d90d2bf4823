//! Gaussian branching random walk on the dyadic tree, its ancestor-count
//! covariance, the comparison bounds against the star kernel, and the
//! critical cascade normalization.

use crate::error::{Error, Result};
use crate::kernels::cov_star;
use crate::rng::RngStream;
use serde::Serialize;
use std::f64::consts::LN_2;

/// One realization of the walk at depth `n`: the step-function values at
/// the `2^n` dyadic cell centers. The value at a point is the sum of one
/// standard normal per dyadic ancestor cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BrwSample {
    pub depth: u32,
    pub values: Vec<f64>,
}

/// Sample the walk by accumulating one fresh normal per node, level by
/// level, left to right.
pub fn sample_brw(depth: u32, rng: &mut RngStream) -> Result<BrwSample> {
    if depth < 1 {
        return Err(Error::Config("branching walk depth must be >= 1".into()));
    }
    if depth > 26 {
        return Err(Error::Config(format!("depth {depth} too deep")));
    }
    let mut level_values: Vec<f64> = vec![0.0];
    for _ in 1..=depth {
        let mut next = Vec::with_capacity(level_values.len() * 2);
        for &parent in &level_values {
            next.push(parent + rng.standard_normal());
            next.push(parent + rng.standard_normal());
        }
        level_values = next;
    }
    Ok(BrwSample {
        depth,
        values: level_values,
    })
}

/// Number of levels `k <= n` at which `x` and `y` share a dyadic cell.
pub fn cov_brw(x: f64, y: f64, depth: u32) -> u32 {
    debug_assert!((0.0..1.0).contains(&x) && (0.0..1.0).contains(&y));
    let mut shared = 0;
    for k in 1..=depth {
        let cells = 2f64.powi(k as i32);
        if (x * cells).floor() == (y * cells).floor() {
            shared += 1;
        } else {
            break;
        }
    }
    shared
}

/// Centers of the `2^n` dyadic cells.
pub fn dyadic_centers(depth: u32) -> Vec<f64> {
    let cells = 1usize << depth;
    (0..cells).map(|i| (i as f64 + 0.5) / cells as f64).collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ComparisonReport {
    /// Max over pairs of `cov_brw - min(-log2 |x-y|, n)`; nonpositive by
    /// the cell geometry.
    pub max_violation: f64,
    /// Smallest constant C with
    /// `2 log2 cov_brw <= 2 cov_star + 2 C log2` on the grid.
    pub fitted_c: f64,
}

/// Evaluate both covariance comparisons over all pairs of the given points.
pub fn check_comparison(depth: u32, points: &[f64]) -> ComparisonReport {
    let t = depth as f64 * LN_2;
    let mut max_violation = f64::NEG_INFINITY;
    let mut fitted_c = f64::NEG_INFINITY;
    for (i, &x) in points.iter().enumerate() {
        for &y in &points[i..] {
            let shared = cov_brw(x, y, depth) as f64;
            let d = (x - y).abs();
            let bound = if d == 0.0 {
                depth as f64
            } else {
                (-d.log2()).min(depth as f64)
            };
            max_violation = max_violation.max(shared - bound);
            fitted_c = fitted_c.max(shared - cov_star(x, y, t) / LN_2);
        }
    }
    ComparisonReport {
        max_violation,
        fitted_c,
    }
}

/// Total mass of the square-root-normalized critical cascade at depth `n`:
/// `sqrt(n) * sum over cells of 2^-n exp(sqrt(2 log2) U_n - n log2)`.
pub fn critical_cascade_total(depth: u32, rng: &mut RngStream) -> Result<f64> {
    let brw = sample_brw(depth, rng)?;
    Ok(cascade_total_of(&brw))
}

/// The same normalization applied to an existing walk sample.
pub fn cascade_total_of(brw: &BrwSample) -> f64 {
    let n = brw.depth as f64;
    let beta = (2.0 * LN_2).sqrt();
    let cell = 2f64.powi(-(brw.depth as i32));
    let sum: f64 = brw
        .values
        .iter()
        .map(|u| cell * (beta * u - n * LN_2).exp())
        .sum();
    n.sqrt() * sum
}

/// Unnormalized total (no `sqrt(n)` factor); degenerates to 0 as the depth
/// grows.
pub fn plain_cascade_total(brw: &BrwSample) -> f64 {
    cascade_total_of(brw) / (brw.depth as f64).sqrt()
}
