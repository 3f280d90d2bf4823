//! Shared estimation utilities: moments, quantiles, percentile bootstrap,
//! Kolmogorov-Smirnov distances (plain and weighted), and least-squares
//! slope fits.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Seed of the dedicated bootstrap stream. Fixed so that confidence
/// intervals are reproducible independently of how data was generated.
pub const BOOTSTRAP_SEED: u64 = 0x0b007;

/// Number of bootstrap resamples.
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Asymptotic Kolmogorov-Smirnov critical coefficient at the 1% level:
/// reject when `D > KS_COEFF_1PCT / sqrt(n)` (one-sample) or with the
/// two-sample effective size.
pub const KS_COEFF_1PCT: f64 = 1.628;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfInterval {
    pub lo: f64,
    pub hi: f64,
}

impl ConfInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn overlaps(&self, other: &ConfInterval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub ci: ConfInterval,
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn standard_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Empirical quantile by linear interpolation of the order statistics.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    assert!((0.0..=1.0).contains(&q), "quantile level out of range");
    assert!(!xs.is_empty());
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample"));
    quantile_sorted(&sorted, q)
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Nonparametric percentile bootstrap of a statistic of the sample.
///
/// `stat` receives the resampled values in resampling order. The resample
/// stream is fixed, so repeated calls on the same data give identical
/// intervals.
pub fn bootstrap_ci<F>(xs: &[f64], stat: F) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64,
{
    if xs.is_empty() {
        return Err(Error::Numeric("bootstrap on empty sample".into()));
    }
    let value = stat(xs);
    let mut rng = RngStream::new(BOOTSTRAP_SEED, 0);
    let mut resample = vec![0.0; xs.len()];
    let mut stats = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        for slot in resample.iter_mut() {
            *slot = xs[rng.index(xs.len())];
        }
        stats.push(stat(&resample));
    }
    stats.sort_by(|a, b| a.partial_cmp(b).expect("non-finite bootstrap statistic"));
    Ok(Estimate {
        value,
        ci: ConfInterval {
            lo: quantile_sorted(&stats, 0.025),
            hi: quantile_sorted(&stats, 0.975),
        },
    })
}

/// Percentile bootstrap of the sample mean.
pub fn bootstrap_mean(xs: &[f64]) -> Result<Estimate> {
    bootstrap_ci(xs, mean)
}

/// Percentile bootstrap over paired rows, for statistics of several
/// columns at once (rows are resampled jointly).
pub fn bootstrap_rows_ci<F>(n: usize, stat: F) -> Result<Estimate>
where
    F: Fn(&[usize]) -> f64,
{
    if n == 0 {
        return Err(Error::Numeric("bootstrap on empty sample".into()));
    }
    let identity: Vec<usize> = (0..n).collect();
    let value = stat(&identity);
    let mut rng = RngStream::new(BOOTSTRAP_SEED, 1);
    let mut idx = vec![0usize; n];
    let mut stats = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        for slot in idx.iter_mut() {
            *slot = rng.index(n);
        }
        stats.push(stat(&idx));
    }
    stats.sort_by(|a, b| a.partial_cmp(b).expect("non-finite bootstrap statistic"));
    Ok(Estimate {
        value,
        ci: ConfInterval {
            lo: quantile_sorted(&stats, 0.025),
            hi: quantile_sorted(&stats, 0.975),
        },
    })
}

/// Percentile bootstrap interval for a survival probability `k/n`. The
/// marginal resampling law of an indicator mean is binomial, so the counts
/// are drawn directly instead of resampling indicators.
pub fn binomial_ci(successes: u64, n: u64, rng: &mut RngStream) -> ConfInterval {
    let p = successes as f64 / n as f64;
    let mut stats: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| rng.binomial(n, p) as f64 / n as f64)
        .collect();
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ConfInterval {
        lo: quantile_sorted(&stats, 0.025),
        hi: quantile_sorted(&stats, 0.975),
    }
}

/// One-sample Kolmogorov-Smirnov distance against a CDF.
pub fn ks_one_sample<C>(xs: &[f64], cdf: C) -> f64
where
    C: Fn(f64) -> f64,
{
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample"));
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}

/// Weighted one-sample Kolmogorov-Smirnov distance: the empirical CDF uses
/// normalized weights. Returns `(distance, effective_sample_size)` with
/// `n_eff = (sum w)^2 / sum w^2`.
pub fn ks_weighted<C>(xs: &[f64], weights: &[f64], cdf: C) -> (f64, f64)
where
    C: Fn(f64) -> f64,
{
    assert_eq!(xs.len(), weights.len());
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("non-finite sample"));
    let wsum: f64 = weights.iter().sum();
    let w2sum: f64 = weights.iter().map(|w| w * w).sum();
    let n_eff = wsum * wsum / w2sum;
    let mut acc = 0.0;
    let mut d: f64 = 0.0;
    for &i in &order {
        let f = cdf(xs[i]);
        d = d.max((f - acc / wsum).abs());
        acc += weights[i];
        d = d.max((acc / wsum - f).abs());
    }
    (d, n_eff)
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> f64 {
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(|u, v| u.partial_cmp(v).expect("non-finite sample"));
    b.sort_by(|u, v| u.partial_cmp(v).expect("non-finite sample"));
    let (n, m) = (a.len(), b.len());
    let mut i = 0;
    let mut j = 0;
    let mut d: f64 = 0.0;
    while i < n && j < m {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

/// Weighted-vs-plain two-sample KS distance: the first sample carries
/// weights, the second is unweighted. Returns `(distance, n_eff_weighted)`.
pub fn ks_two_sample_weighted(xs: &[f64], weights: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), weights.len());
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("non-finite sample"));
    let mut b = ys.to_vec();
    b.sort_by(|u, v| u.partial_cmp(v).expect("non-finite sample"));
    let wsum: f64 = weights.iter().sum();
    let w2sum: f64 = weights.iter().map(|w| w * w).sum();
    let n_eff = wsum * wsum / w2sum;
    let m = b.len();
    let mut acc = 0.0;
    let mut j = 0;
    let mut d: f64 = 0.0;
    for &i in &order {
        let x = xs[i];
        while j < m && b[j] <= x {
            j += 1;
        }
        acc += weights[i];
        d = d.max((acc / wsum - j as f64 / m as f64).abs());
    }
    (d, n_eff)
}

/// One-sample KS threshold at the 1% level.
pub fn ks_threshold_1pct(n: f64) -> f64 {
    KS_COEFF_1PCT / n.sqrt()
}

/// Two-sample KS threshold at the 1% level.
pub fn ks_two_sample_threshold_1pct(n: f64, m: f64) -> f64 {
    KS_COEFF_1PCT * ((n + m) / (n * m)).sqrt()
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// CDF of a centered Gaussian with the given standard deviation.
pub fn centered_normal_cdf(x: f64, sd: f64) -> f64 {
    std_normal_cdf(x / sd)
}

/// Weighted Pearson correlation.
pub fn weighted_correlation(xs: &[f64], ys: &[f64], weights: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    assert_eq!(xs.len(), weights.len());
    let wsum: f64 = weights.iter().sum();
    let mx = xs.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>() / wsum;
    let my = ys.iter().zip(weights).map(|(y, w)| y * w).sum::<f64>() / wsum;
    let mut cxy = 0.0;
    let mut cxx = 0.0;
    let mut cyy = 0.0;
    for ((&x, &y), &w) in xs.iter().zip(ys).zip(weights) {
        cxy += w * (x - mx) * (y - my);
        cxx += w * (x - mx) * (x - mx);
        cyy += w * (y - my) * (y - my);
    }
    cxy / (cxx * cyy).sqrt()
}

/// Weighted mean with the weight-normalized convention.
pub fn weighted_mean(xs: &[f64], weights: &[f64]) -> f64 {
    let wsum: f64 = weights.iter().sum();
    xs.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>() / wsum
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

impl SlopeFit {
    /// Two-sided 95% interval for the slope.
    pub fn slope_ci(&self) -> ConfInterval {
        ConfInterval {
            lo: self.slope - 1.96 * self.slope_se,
            hi: self.slope + 1.96 * self.slope_se,
        }
    }
}

/// Ordinary least squares line fit with the usual slope standard error.
pub fn ols(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::Numeric(format!(
            "slope fit needs >= 3 paired points, got {}",
            xs.len().min(ys.len())
        )));
    }
    let n = xs.len() as f64;
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Numeric("degenerate abscissae in slope fit".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let slope_se = (rss / (n - 2.0) / sxx).sqrt();
    Ok(SlopeFit {
        slope,
        intercept,
        slope_se,
    })
}
