//! Tail statistics of the total mass: survival curves and the plateau of
//! `lambda * P(Y > lambda)`, the halves estimator of the tail constant,
//! the size-biased two-point sampler and its closed-form checks, and the
//! windowed first-moment curves.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::stats::{self, ConfInterval, Estimate, SlopeFit};
use serde::Serialize;
use std::f64::consts::LN_2;

/// Minimum resolvable tail count: survival estimates below `10/N` are
/// flagged rather than trusted.
pub const MIN_TAIL_COUNT: f64 = 10.0;

#[derive(Debug, Clone, Serialize)]
pub struct TailCurve {
    pub lambdas: Vec<f64>,
    pub survival: Vec<f64>,
    pub lambda_p: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub resolvable: Vec<bool>,
    pub n: usize,
}

/// Log-spaced grid from the 90% quantile up to the smallest resolvable
/// survival level.
pub fn default_lambda_grid(totals: &[f64], points: usize) -> Vec<f64> {
    let lo = stats::quantile(totals, 0.90);
    let hi = stats::quantile(totals, 1.0 - MIN_TAIL_COUNT / totals.len() as f64);
    log_spaced(lo, hi, points)
}

pub fn log_spaced(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && points >= 2);
    let step = (hi / lo).ln() / (points - 1) as f64;
    (0..points).map(|i| lo * (i as f64 * step).exp()).collect()
}

/// Empirical survival curve with percentile-bootstrap intervals.
pub fn tail_curve(totals: &[f64], lambdas: &[f64]) -> Result<TailCurve> {
    let n = totals.len();
    if n < 1000 {
        return Err(Error::Config(format!(
            "tail curve needs at least 1000 replicas, got {n}"
        )));
    }
    if lambdas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("lambda grid must be strictly increasing".into()));
    }
    let mut sorted = totals.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite mass"));
    let mut rng = RngStream::new(stats::BOOTSTRAP_SEED, 2);
    let mut curve = TailCurve {
        lambdas: lambdas.to_vec(),
        survival: Vec::new(),
        lambda_p: Vec::new(),
        ci_lo: Vec::new(),
        ci_hi: Vec::new(),
        resolvable: Vec::new(),
        n,
    };
    for &lambda in lambdas {
        let above = n - sorted.partition_point(|&y| y <= lambda);
        let p = above as f64 / n as f64;
        let ci = stats::binomial_ci(above as u64, n as u64, &mut rng);
        curve.survival.push(p);
        curve.lambda_p.push(lambda * p);
        curve.ci_lo.push(ci.lo);
        curve.ci_hi.push(ci.hi);
        curve.resolvable.push(above as f64 >= MIN_TAIL_COUNT);
    }
    Ok(curve)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PlateauReport {
    /// Geometric mean of `lambda * P` over the window.
    pub level: f64,
    pub max: f64,
    pub min: f64,
    pub max_over_min: f64,
    /// Window `[lambda_top/10, lambda_top]` in grid coordinates.
    pub lambda_lo: f64,
    pub lambda_hi: f64,
}

/// Plateau of `lambda * P` over the top resolvable decade of the grid.
pub fn plateau(curve: &TailCurve) -> Result<PlateauReport> {
    let top = curve
        .lambdas
        .iter()
        .zip(&curve.resolvable)
        .filter(|(_, &r)| r)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::Numeric("no resolvable tail points".into()));
    }
    let lo = top / 10.0;
    let mut level_log = 0.0;
    let mut count = 0usize;
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    for i in 0..curve.lambdas.len() {
        if curve.resolvable[i] && curve.lambdas[i] >= lo && curve.lambdas[i] <= top {
            let v = curve.lambda_p[i];
            level_log += v.ln();
            count += 1;
            max = max.max(v);
            min = min.min(v);
        }
    }
    if count < 3 {
        return Err(Error::Numeric("plateau window too narrow".into()));
    }
    Ok(PlateauReport {
        level: (level_log / count as f64).exp(),
        max,
        min,
        max_over_min: max / min,
        lambda_lo: lo,
        lambda_hi: top,
    })
}

/// Log-log slope of the survival curve between the `1 - hi_q` and
/// `1 - lo_q` tail quantiles (defaults: top 1% to top 0.01%).
pub fn tail_slope(totals: &[f64], lo_q: f64, hi_q: f64, points: usize) -> Result<SlopeFit> {
    let n = totals.len() as f64;
    if (1.0 - hi_q) * n < MIN_TAIL_COUNT - 0.5 {
        return Err(Error::Config(format!(
            "slope quantile {hi_q} unresolvable at N = {n}"
        )));
    }
    let lo = stats::quantile(totals, lo_q);
    let hi = stats::quantile(totals, hi_q);
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Numeric("degenerate slope window".into()));
    }
    let lambdas = log_spaced(lo, hi, points);
    let mut sorted = totals.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite mass"));
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &lambda in &lambdas {
        let above = sorted.len() - sorted.partition_point(|&y| y <= lambda);
        if (above as f64) >= MIN_TAIL_COUNT {
            xs.push(lambda.ln());
            ys.push((above as f64 / n).ln());
        }
    }
    stats::ols(&xs, &ys)
}

/// Halves estimator of the tail constant:
/// `(2 / log 2) * mean(M0 * log(1 + M1 / M0))` with bootstrap CI.
pub fn estimate_c1(halves: &[(f64, f64)]) -> Result<Estimate> {
    if halves.is_empty() {
        return Err(Error::Config("empty ensemble".into()));
    }
    if halves.iter().any(|&(m0, m1)| m0 <= 0.0 || m1 <= 0.0) {
        return Err(Error::Numeric(
            "halves estimator needs strictly positive half masses".into(),
        ));
    }
    let terms: Vec<f64> = halves
        .iter()
        .map(|&(m0, m1)| 2.0 / LN_2 * m0 * (1.0 + m1 / m0).ln())
        .collect();
    stats::bootstrap_mean(&terms)
}

/// The same estimator averaged with its halves-swapped mirror.
pub fn estimate_c1_symmetrized(halves: &[(f64, f64)]) -> Result<Estimate> {
    let mirrored: Vec<(f64, f64)> = halves
        .iter()
        .flat_map(|&(m0, m1)| [(m0, m1), (m1, m0)])
        .collect();
    estimate_c1(&mirrored)
}

/// One draw of the size-biased two-point experiment: lognormal half
/// weights, totals resampled from an ensemble, a coin picked by relative
/// weight, and the record weighted by the total weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeyriereSample {
    pub j: u8,
    /// Selected half weight.
    pub w: f64,
    /// Selected total mass.
    pub y: f64,
    /// Opposite half contribution `W_{1-j} Y_{1-j}`.
    pub b: f64,
    /// Sampling weight `W_0 + W_1`; has unit mean.
    pub weight: f64,
}

pub fn peyriere_sample(rng: &mut RngStream, totals: &[f64]) -> Result<PeyriereSample> {
    if totals.is_empty() {
        return Err(Error::Config("empty mass ensemble".into()));
    }
    let half_weight = |g: f64| 0.5 * ((2.0 * LN_2).sqrt() * g - LN_2).exp();
    let w0 = half_weight(rng.standard_normal());
    let w1 = half_weight(rng.standard_normal());
    let y0 = totals[rng.index(totals.len())];
    let y1 = totals[rng.index(totals.len())];
    let weight = w0 + w1;
    let j = if rng.uniform() < w0 / weight { 0u8 } else { 1u8 };
    let (w, y, b) = if j == 0 {
        (w0, y0, w1 * y1)
    } else {
        (w1, y1, w0 * y0)
    };
    Ok(PeyriereSample { j, w, y, b, weight })
}

pub fn peyriere_ensemble(
    rng: &mut RngStream,
    totals: &[f64],
    n: usize,
) -> Result<Vec<PeyriereSample>> {
    (0..n).map(|_| peyriere_sample(rng, totals)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct QbReport {
    pub n: usize,
    pub n_eff: f64,
    /// Weighted KS of `-log W` against a centered Gaussian of variance
    /// `2 log 2`, and its 1% threshold at the effective sample size.
    pub ks_log_w: f64,
    pub ks_log_w_threshold: f64,
    /// Weighted correlation of `(W, Y)` and the `3/sqrt(N)` bar.
    pub corr_w_y: f64,
    pub corr_threshold: f64,
    /// Weighted-vs-plain two-sample KS of the selected totals against the
    /// source ensemble, and its 1% threshold.
    pub ks_y: f64,
    pub ks_y_threshold: f64,
    /// Weighted mean of `W^{-1/2}` with bootstrap CI; the closed form is
    /// `exp(log 2 / 4)`.
    pub mgf_half: Estimate,
    pub mgf_half_expected: f64,
}

impl QbReport {
    pub fn all_pass(&self) -> bool {
        self.ks_log_w < self.ks_log_w_threshold
            && self.corr_w_y.abs() < self.corr_threshold
            && self.ks_y < self.ks_y_threshold
            && self.mgf_half.ci.contains(self.mgf_half_expected)
    }
}

pub fn check_qb(samples: &[PeyriereSample], plain_totals: &[f64]) -> Result<QbReport> {
    if samples.len() < 10_000 {
        return Err(Error::Config("size-biased checks need N >= 10^4".into()));
    }
    let n = samples.len();
    let weights: Vec<f64> = samples.iter().map(|s| s.weight).collect();
    let neg_log_w: Vec<f64> = samples.iter().map(|s| -s.w.ln()).collect();
    let ws: Vec<f64> = samples.iter().map(|s| s.w).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.y).collect();

    let sd = (2.0 * LN_2).sqrt();
    let (ks_log_w, n_eff) =
        stats::ks_weighted(&neg_log_w, &weights, |x| stats::centered_normal_cdf(x, sd));
    let corr_w_y = stats::weighted_correlation(&ws, &ys, &weights);
    let (ks_y, y_eff) = stats::ks_two_sample_weighted(&ys, &weights, plain_totals);

    let mgf_terms: Vec<f64> = samples
        .iter()
        .map(|s| s.weight * s.w.powf(-0.5))
        .collect();
    let mgf_half = weighted_ratio_bootstrap(&mgf_terms, &weights)?;

    Ok(QbReport {
        n,
        n_eff,
        ks_log_w,
        ks_log_w_threshold: stats::ks_threshold_1pct(n_eff),
        corr_w_y,
        corr_threshold: 3.0 / (n as f64).sqrt(),
        ks_y,
        ks_y_threshold: stats::ks_two_sample_threshold_1pct(y_eff, plain_totals.len() as f64),
        mgf_half,
        mgf_half_expected: (LN_2 / 4.0).exp(),
    })
}

/// Bootstrap of a self-normalized weighted mean `sum(num) / sum(den)`.
fn weighted_ratio_bootstrap(numerators: &[f64], denominators: &[f64]) -> Result<Estimate> {
    let n = numerators.len();
    stats::bootstrap_rows_ci(n, |idx| {
        let mut num = 0.0;
        let mut den = 0.0;
        for &i in idx {
            num += numerators[i];
            den += denominators[i];
        }
        num / den
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FCurve {
    pub alpha: f64,
    pub beta: f64,
    pub xs: Vec<f64>,
    pub estimates: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub counts: Vec<usize>,
    pub n: usize,
}

/// Windowed first-moment curve: per grid point `x`, the sample mean of
/// `Y 1{Y in (alpha e^x, beta e^x]}`.
pub fn f_alpha_beta(totals: &[f64], alpha: f64, beta: f64, xs: &[f64]) -> Result<FCurve> {
    if !(alpha > 0.0 && beta > alpha) {
        return Err(Error::Config(format!(
            "window needs 0 < alpha < beta, got ({alpha}, {beta})"
        )));
    }
    if totals.is_empty() {
        return Err(Error::Config("empty ensemble".into()));
    }
    let n = totals.len();
    let nx = xs.len();
    let estimates = f_curve_values(totals, alpha, beta, xs, None);
    let mut counts = vec![0usize; nx];
    for &y in totals {
        if y <= 0.0 {
            continue;
        }
        for (k, &x) in xs.iter().enumerate() {
            if y > alpha * x.exp() && y <= beta * x.exp() {
                counts[k] += 1;
            }
        }
    }
    // Joint row bootstrap over the whole curve.
    let mut rng = RngStream::new(stats::BOOTSTRAP_SEED, 3);
    let mut resampled: Vec<Vec<f64>> = Vec::with_capacity(stats::BOOTSTRAP_RESAMPLES);
    let mut idx = vec![0usize; n];
    for _ in 0..stats::BOOTSTRAP_RESAMPLES {
        for slot in idx.iter_mut() {
            *slot = rng.index(n);
        }
        resampled.push(f_curve_values(totals, alpha, beta, xs, Some(&idx)));
    }
    let mut ci_lo = Vec::with_capacity(nx);
    let mut ci_hi = Vec::with_capacity(nx);
    for k in 0..nx {
        let mut col: Vec<f64> = resampled.iter().map(|r| r[k]).collect();
        col.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ci_lo.push(stats::quantile_sorted(&col, 0.025));
        ci_hi.push(stats::quantile_sorted(&col, 0.975));
    }
    Ok(FCurve {
        alpha,
        beta,
        xs: xs.to_vec(),
        estimates,
        ci_lo,
        ci_hi,
        counts,
        n,
    })
}

fn f_curve_values(
    totals: &[f64],
    alpha: f64,
    beta: f64,
    xs: &[f64],
    idx: Option<&[usize]>,
) -> Vec<f64> {
    let n = match idx {
        Some(i) => i.len(),
        None => totals.len(),
    };
    let mut sums = vec![0.0f64; xs.len()];
    let mut add = |y: f64| {
        // Y lands in window x iff log(Y/beta) <= x < log(Y/alpha).
        if y <= 0.0 {
            return;
        }
        let x_lo = (y / beta).ln();
        let x_hi = (y / alpha).ln();
        for (k, &x) in xs.iter().enumerate() {
            if x >= x_lo && x < x_hi {
                sums[k] += y;
            }
        }
    };
    match idx {
        Some(rows) => {
            for &i in rows {
                add(totals[i]);
            }
        }
        None => {
            for &y in totals {
                add(y);
            }
        }
    }
    sums.iter().map(|s| s / n as f64).collect()
}

/// Mean over the resolvable upper half of a windowed curve, with CI taken
/// pointwise-rms from the member intervals.
pub fn f_plateau(curve: &FCurve, min_count: usize) -> Result<Estimate> {
    let usable: Vec<usize> = (0..curve.xs.len())
        .filter(|&k| curve.counts[k] >= min_count)
        .collect();
    if usable.len() < 2 {
        return Err(Error::Numeric("no resolvable window points".into()));
    }
    let upper = &usable[usable.len() / 2..];
    let value = upper.iter().map(|&k| curve.estimates[k]).sum::<f64>() / upper.len() as f64;
    let lo = upper.iter().map(|&k| curve.ci_lo[k]).sum::<f64>() / upper.len() as f64;
    let hi = upper.iter().map(|&k| curve.ci_hi[k]).sum::<f64>() / upper.len() as f64;
    Ok(Estimate {
        value,
        ci: ConfInterval { lo, hi },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TailModificationReport {
    /// Per prefix length: the fitted constant
    /// `sup over resolvable lambda of lambda * P(mass > lambda) / alpha`.
    pub fitted: Vec<(f64, f64)>,
    /// Ratio of the largest to smallest fitted constant.
    pub spread: f64,
}

/// Uniformity of the prefix-interval tail bound: the fitted constants for
/// the different prefix lengths should agree within a modest factor.
pub fn tail_modification_check(
    prefixes: &[(f64, Vec<f64>)],
    lambdas_per_unit: usize,
) -> Result<TailModificationReport> {
    let mut fitted = Vec::new();
    for (alpha, masses) in prefixes {
        if masses.len() < 1000 {
            return Err(Error::Config("prefix ensembles need N >= 1000".into()));
        }
        let grid = default_lambda_grid(masses, lambdas_per_unit);
        let curve = tail_curve(masses, &grid)?;
        let c = curve
            .lambda_p
            .iter()
            .zip(&curve.resolvable)
            .filter(|(_, &r)| r)
            .map(|(&v, _)| v / alpha)
            .fold(f64::NEG_INFINITY, f64::max);
        if !c.is_finite() {
            return Err(Error::Numeric(format!(
                "no resolvable tail for prefix {alpha}"
            )));
        }
        fitted.push((*alpha, c));
    }
    let max = fitted.iter().map(|&(_, c)| c).fold(f64::NEG_INFINITY, f64::max);
    let min = fitted.iter().map(|&(_, c)| c).fold(f64::INFINITY, f64::min);
    Ok(TailModificationReport {
        fitted,
        spread: max / min,
    })
}
