//! Statistical and exact verification of the auxiliary inequalities: the
//! convexity comparison for ordered kernels, the weighted-sum tail bound
//! with its torus sharpness construction, the pinned-supremum Gaussian
//! tail bound, and the mixed half-interval moments.

use crate::error::{Error, Result};
use crate::kernels::{cov_star, FieldSpec};
use crate::rng::RngStream;
use crate::sampler::{CovarianceMatrix, FactorizedCov};
use crate::stats::{self, Estimate, SlopeFit};
use nalgebra::DVector;
use serde::Serialize;
use std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    HoldsWithinCi,
    Violated,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityReport {
    pub name: String,
    pub left: Estimate,
    pub right: Estimate,
    /// Paired per-replica difference when common random numbers were used.
    pub paired_diff: Option<Estimate>,
    pub verdict: Verdict,
    pub n: usize,
}

fn verdict_from(left: &Estimate, right: &Estimate, paired: Option<&Estimate>) -> Verdict {
    let finite = |e: &Estimate| e.value.is_finite() && e.ci.lo.is_finite() && e.ci.hi.is_finite();
    if !finite(left) || !finite(right) {
        return Verdict::Inconclusive;
    }
    if let Some(d) = paired {
        if !finite(d) {
            return Verdict::Inconclusive;
        }
        // Violated only when the paired difference is decisively adverse.
        return if d.ci.hi < 0.0 {
            Verdict::Violated
        } else {
            Verdict::HoldsWithinCi
        };
    }
    if left.ci.hi < right.ci.lo {
        Verdict::Violated
    } else {
        Verdict::HoldsWithinCi
    }
}

/// Convexity comparison for entrywise-ordered covariance kernels: with
/// `G(x) = x^h` concave, the less correlated field has the larger
/// `E G(chaos mass)`. Runs with common random numbers and reports the
/// paired difference `G(S_A) - G(S_B)`.
pub fn kahane_test(
    kernel_a: &CovarianceMatrix,
    kernel_b: &CovarianceMatrix,
    h: f64,
    n_replicas: usize,
    rng: &mut RngStream,
) -> Result<InequalityReport> {
    if !(0.0 < h && h < 1.0) {
        return Err(Error::Config(format!("concavity exponent must be in (0,1), got {h}")));
    }
    if kernel_a.n() != kernel_b.n() {
        return Err(Error::Config("kernel size mismatch".into()));
    }
    if !kernel_a.dominated_by(kernel_b) {
        return Err(Error::Config(
            "kernel A must be entrywise dominated by kernel B".into(),
        ));
    }
    let m = kernel_a.n();
    let factor_a = FactorizedCov::new(kernel_a)?;
    let factor_b = FactorizedCov::new(kernel_b)?;
    let diag_a: Vec<f64> = (0..m).map(|i| kernel_a.entry(i, i)).collect();
    let diag_b: Vec<f64> = (0..m).map(|i| kernel_b.entry(i, i)).collect();

    let chaos = |field: &[f64], diag: &[f64]| -> f64 {
        field
            .iter()
            .zip(diag)
            .map(|(x, v)| (x - 0.5 * v).exp())
            .sum::<f64>()
            / m as f64
    };

    let mut g_a = Vec::with_capacity(n_replicas);
    let mut g_b = Vec::with_capacity(n_replicas);
    let mut z = DVector::zeros(m);
    for _ in 0..n_replicas {
        for v in z.iter_mut() {
            *v = rng.standard_normal();
        }
        let sample_a = factor_a.sample_from(&z);
        let sample_b = factor_b.sample_from(&z);
        g_a.push(chaos(&sample_a, &diag_a).powf(h));
        g_b.push(chaos(&sample_b, &diag_b).powf(h));
    }
    let left = stats::bootstrap_mean(&g_a)?;
    let right = stats::bootstrap_mean(&g_b)?;
    let diffs: Vec<f64> = g_a.iter().zip(&g_b).map(|(a, b)| a - b).collect();
    let paired = stats::bootstrap_mean(&diffs)?;
    let verdict = verdict_from(&left, &right, Some(&paired));
    Ok(InequalityReport {
        name: format!("kernel-ordering h={h}"),
        left,
        right,
        paired_diff: Some(paired),
        verdict,
        n: n_replicas,
    })
}

/// Kernels of the product-field pair on `i1 x i2`: the version with an
/// independent second factor is entrywise dominated by the coupled one.
/// Both fields carry the critical scaling `sqrt(2) X`.
pub fn product_pair_kernels(
    i1: (f64, f64),
    i2: (f64, f64),
    m_per_axis: usize,
    t: f64,
) -> (CovarianceMatrix, CovarianceMatrix) {
    let axis = |iv: (f64, f64), k: usize| iv.0 + (k as f64 + 0.5) * (iv.1 - iv.0) / m_per_axis as f64;
    let n = m_per_axis * m_per_axis;
    let point = |idx: usize| (axis(i1, idx / m_per_axis), axis(i2, idx % m_per_axis));
    let c = |u: f64, v: f64| crate::kernels::cov_exact(u, v, t);
    let independent = CovarianceMatrix::from_fn(n, |p, q| {
        let (x, y) = point(p);
        let (xp, yp) = point(q);
        2.0 * (c(x, xp) + c(y, yp))
    });
    let coupled = CovarianceMatrix::from_fn(n, |p, q| {
        let (x, y) = point(p);
        let (xp, yp) = point(q);
        2.0 * (c(x, xp) + c(y, yp) + c(x, yp) + c(y, xp))
    });
    (independent, coupled)
}

/// Kernels of the walk-vs-star comparison at depth `n`: `2 log2` times the
/// ancestor-count kernel against twice the star kernel plus `2 C log2`.
pub fn brw_star_kernels(depth: u32, c_const: f64) -> (CovarianceMatrix, CovarianceMatrix) {
    let centers = crate::cascade::dyadic_centers(depth);
    let t = depth as f64 * LN_2;
    let m = centers.len();
    let walk = CovarianceMatrix::from_fn(m, |i, j| {
        2.0 * LN_2 * crate::cascade::cov_brw(centers[i], centers[j], depth) as f64
    });
    let star = CovarianceMatrix::from_fn(m, |i, j| {
        2.0 * cov_star(centers[i], centers[j], t) + 2.0 * c_const * LN_2
    });
    (walk, star)
}

#[derive(Debug, Clone, Serialize)]
pub struct SumTailReport {
    pub n_copies: usize,
    pub replicas: usize,
    pub weight_sum: f64,
    /// Smallest constant C with
    /// `P(sum > lambda) <= C A log(N+1) (sum a_j) / lambda` over the grid.
    pub fitted_c: f64,
    pub table: Vec<(f64, f64)>,
}

/// Empirical check of the weighted-sum tail bound. The generator draws one
/// joint realization of the (possibly dependent) identically distributed
/// copies; `tail_a` is the constant in the hypothesis `P(X > l) <= A/l`.
pub fn sum_tail_test(
    weights: &[f64],
    mut generator: impl FnMut(&mut RngStream) -> Vec<f64>,
    tail_a: f64,
    lambdas: &[f64],
    replicas: usize,
    rng: &mut RngStream,
) -> Result<SumTailReport> {
    if weights.is_empty() || weights.iter().any(|&a| a < 0.0) {
        return Err(Error::Config("weights must be nonnegative".into()));
    }
    let weight_sum: f64 = weights.iter().sum();
    let n_copies = weights.len();
    let mut sums = Vec::with_capacity(replicas);
    for _ in 0..replicas {
        let copies = generator(rng);
        if copies.len() != n_copies {
            return Err(Error::Config("generator arity mismatch".into()));
        }
        sums.push(
            copies
                .iter()
                .zip(weights)
                .map(|(x, a)| a * x)
                .sum::<f64>(),
        );
    }
    sums.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sum"));
    let log_factor = ((n_copies + 1) as f64).ln();
    let mut fitted_c = 0.0f64;
    let mut table = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let above = sums.len() - sums.partition_point(|&s| s <= lambda);
        let p = above as f64 / replicas as f64;
        let c = lambda * p / (tail_a * log_factor * weight_sum);
        table.push((lambda, c));
        fitted_c = fitted_c.max(c);
    }
    Ok(SumTailReport {
        n_copies,
        replicas,
        weight_sum,
        fitted_c,
        table,
    })
}

/// Joint draw of iid unit-Pareto copies, `P(X > l) = 1/l` above 1.
pub fn iid_pareto_generator(n_copies: usize) -> impl FnMut(&mut RngStream) -> Vec<f64> {
    move |rng| (0..n_copies).map(|_| 1.0 / (1.0 - rng.uniform())).collect()
}

/// The torus construction: the rotated copies of the step profile whose
/// weighted average is constant.
pub fn torus_generator(n_copies: usize) -> impl FnMut(&mut RngStream) -> Vec<f64> {
    move |rng| {
        let omega = rng.uniform();
        (0..n_copies)
            .map(|j| {
                let cell = ((omega + j as f64 / n_copies as f64) % 1.0 * n_copies as f64) as usize;
                n_copies as f64 / (cell.min(n_copies - 1) + 1) as f64
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TorusReport {
    pub n: usize,
    /// `H_N`, the constant value of the averaged copies.
    pub harmonic_sum: f64,
    pub log_n: f64,
    /// `P(X0 > N/k) = (k-1)/N < k/N` verified by counting cells at every
    /// jump point.
    pub tail_bound_strict: bool,
    /// Every rotation multiset is a permutation of the cell values, so the
    /// average is the same constant on each cell.
    pub average_is_constant: bool,
}

/// Exact-arithmetic verification of the sharpness example.
pub fn torus_counterexample(n: usize) -> Result<TorusReport> {
    if n < 2 {
        return Err(Error::Config("torus construction needs N >= 2".into()));
    }
    // Tail bound at the jump points lambda = N/k: the cells exceeding the
    // level are exactly those with j < k.
    let mut tail_bound_strict = true;
    for k in 1..=n {
        let exceed = (1..=n).filter(|&j| j < k).count();
        // P = (k-1)/N must be strictly below 1/lambda = k/N.
        if exceed != k - 1 || !(exceed < k) {
            tail_bound_strict = false;
        }
    }
    // Rotating by j maps cell i to cell (i + j) mod N; each row of the
    // rotation table is a permutation, so the average over copies is H_N
    // on every cell.
    let mut average_is_constant = true;
    let mut seen = vec![false; n];
    for i in 0..n {
        seen.iter_mut().for_each(|s| *s = false);
        for j in 0..n {
            seen[(i + j) % n] = true;
        }
        if !seen.iter().all(|&s| s) {
            average_is_constant = false;
        }
    }
    let harmonic_sum: f64 = (1..=n).map(|j| 1.0 / j as f64).sum();
    Ok(TorusReport {
        n,
        harmonic_sum,
        log_n: (n as f64).ln(),
        tail_bound_strict,
        average_is_constant,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BorellReport {
    pub n: usize,
    /// Measured increment constant: `sup 2(c(0) - c(d))/d` on the grid.
    pub increment_l: f64,
    /// Fitted prefactor making the Gaussian bound dominate everywhere.
    pub fitted_c_eps: f64,
    /// Slope of `log P(sup > s)` against `s^2` over resolvable levels.
    pub slope: SlopeFit,
    /// The bound's slope `-1 / ((2 + eps) |I| L)`.
    pub bound_slope: f64,
    /// Empirical sup-tail dominates the single-point Gaussian tail.
    pub pointwise_domination: bool,
    /// Mean supremum and its Brownian comparison cap `sqrt(2 L |I| / pi)`.
    pub mean_sup: f64,
    pub brownian_cap: f64,
    pub verdict: Verdict,
}

/// Tail of the supremum of the pinned field over a subinterval, compared
/// with the Gaussian bound `c_eps exp(-s^2 / ((2+eps) |I| L))`.
pub fn borell_tis_test(
    spec: FieldSpec,
    interval: (f64, f64),
    s_grid: &[f64],
    eps: f64,
    grid_points: usize,
    n_replicas: usize,
    rng: &mut RngStream,
) -> Result<BorellReport> {
    let (a, b) = interval;
    if !(0.0 <= a && a < b && b <= 1.0) {
        return Err(Error::Config(format!("bad interval ({a}, {b})")));
    }
    if !(eps > 0.0) {
        return Err(Error::Config("eps must be positive".into()));
    }
    let len = b - a;
    let kernel = |x: f64, y: f64| spec.cov(x, y);
    // Interior grid; the pinned point x0 = a contributes sup >= 0.
    let xs: Vec<f64> = (1..=grid_points)
        .map(|j| a + j as f64 * len / grid_points as f64)
        .collect();

    let mut increment_l = 0.0f64;
    let var0 = kernel(a, a);
    for (i, &x) in xs.iter().enumerate() {
        let d0 = x - a;
        increment_l = increment_l.max(2.0 * (var0 - kernel(a, x)) / d0);
        for &y in &xs[i + 1..] {
            let d = y - x;
            increment_l = increment_l.max(2.0 * (var0 - kernel(x, y)) / d);
        }
    }

    // Pinned covariance c(x,y) - c(x,a) - c(y,a) + c(a,a).
    let pinned = CovarianceMatrix::from_fn(xs.len(), |i, j| {
        kernel(xs[i], xs[j]) - kernel(xs[i], a) - kernel(xs[j], a) + var0
    });
    let factor = FactorizedCov::new(&pinned)?;
    let mut sups = Vec::with_capacity(n_replicas);
    for _ in 0..n_replicas {
        let z = factor.sample(rng);
        let sup = z.iter().cloned().fold(0.0f64, f64::max);
        sups.push(sup);
    }
    sups.sort_by(|p, q| p.partial_cmp(q).expect("non-finite sup"));
    let denom = (2.0 + eps) * len * increment_l;
    let bound_slope = -1.0 / denom;

    let n = n_replicas as f64;
    let mut fitted_c_eps = 0.0f64;
    let mut s2 = Vec::new();
    let mut logp = Vec::new();
    for &s in s_grid {
        let above = sups.len() - sups.partition_point(|&v| v <= s);
        if (above as f64) < crate::tail::MIN_TAIL_COUNT {
            continue;
        }
        let p = above as f64 / n;
        fitted_c_eps = fitted_c_eps.max(p * (s * s / denom).exp());
        s2.push(s * s);
        logp.push(p.ln());
    }
    let slope = stats::ols(&s2, &logp)?;

    // The sup tail dominates the sharpest single-point tail.
    let max_var = (0..xs.len())
        .map(|i| pinned.entry(i, i))
        .fold(0.0f64, f64::max);
    let mut pointwise_domination = true;
    for &s in s_grid {
        let above = sups.len() - sups.partition_point(|&v| v <= s);
        let p_emp = above as f64 / n;
        let p_point = 1.0 - stats::centered_normal_cdf(s, max_var.sqrt());
        // Three-sigma binomial slack on the comparison.
        let slack = 3.0 * (p_point * (1.0 - p_point) / n).sqrt() + 3.0 / n;
        if p_emp < p_point - slack {
            pointwise_domination = false;
        }
    }

    let mean_sup = stats::mean(&sups);
    let brownian_cap = (2.0 * increment_l * len / std::f64::consts::PI).sqrt();
    // Consistency of the fitted decay with the bound: the empirical slope
    // must be at least as steep, within its 95% band.
    let verdict = if slope.slope + 1.96 * slope.slope_se <= bound_slope {
        Verdict::HoldsWithinCi
    } else if slope.slope - 1.96 * slope.slope_se > bound_slope {
        Verdict::Violated
    } else {
        Verdict::Inconclusive
    };
    Ok(BorellReport {
        n: n_replicas,
        increment_l,
        fitted_c_eps,
        slope,
        bound_slope,
        pointwise_domination,
        mean_sup,
        brownian_cap,
        verdict,
    })
}

/// Sample mean of `(M0 M1)^h` with bootstrap CI.
pub fn mixed_moment(halves: &[(f64, f64)], h: f64) -> Result<Estimate> {
    if halves.is_empty() {
        return Err(Error::Config("empty ensemble".into()));
    }
    if !(0.0..1.0).contains(&h) {
        return Err(Error::Config(format!("moment order must be in [0,1), got {h}")));
    }
    let terms: Vec<f64> = halves.iter().map(|&(m0, m1)| (m0 * m1).powf(h)).collect();
    stats::bootstrap_mean(&terms)
}
