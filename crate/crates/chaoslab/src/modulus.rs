//! Geometric statistics of the dyadic masses: maxima over interval
//! families, the decay of the maximum across levels, the Hausdorff gauge
//! and its exponents, thresholded mass sums, and the cover-sum bound.

use crate::error::{Error, Result};
use crate::measure::DyadicMasses;
use crate::rng::RngStream;
use crate::stats::{self, Estimate, SlopeFit};
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

/// The gauge exponent `sqrt(6 log 2)`.
pub fn gauge_gamma() -> f64 {
    (6.0 * LN_2).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parity {
    All,
    /// Intervals `[2j 2^-n, (2j+1) 2^-n)`.
    Even,
    Odd,
}

/// Maximum mass over the selected family of level-`n` intervals.
pub fn max_dyadic(masses: &DyadicMasses, parity: Parity) -> Result<f64> {
    if parity != Parity::All && masses.level < 1 {
        return Err(Error::Config("parity split needs level >= 1".into()));
    }
    let max = masses
        .masses
        .iter()
        .enumerate()
        .filter(|(i, _)| match parity {
            Parity::All => true,
            Parity::Even => i % 2 == 0,
            Parity::Odd => i % 2 == 1,
        })
        .map(|(_, &m)| m)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(max)
}

#[derive(Debug, Clone, Serialize)]
pub struct ModulusDecayCurve {
    pub gamma: f64,
    pub levels: Vec<u32>,
    pub p_hat: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    /// Fit of `log p_hat` against `log n` over levels with resolvable
    /// estimates.
    pub slope: Option<SlopeFit>,
}

/// Per-level exceedance probability `P(max mass >= n^-gamma)` from
/// recorded per-replica maxima, with the fitted log-log slope.
pub fn modulus_decay(per_level_maxima: &[(u32, Vec<f64>)], gamma: f64) -> Result<ModulusDecayCurve> {
    if !(0.0 < gamma && gamma < 0.5) {
        return Err(Error::Config(format!(
            "decay exponent must lie in (0, 1/2), got {gamma}"
        )));
    }
    let mut curve = ModulusDecayCurve {
        gamma,
        levels: Vec::new(),
        p_hat: Vec::new(),
        ci_lo: Vec::new(),
        ci_hi: Vec::new(),
        slope: None,
    };
    let mut rng = RngStream::new(stats::BOOTSTRAP_SEED, 4);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (level, maxima) in per_level_maxima {
        if maxima.is_empty() {
            return Err(Error::Config(format!("level {level}: empty ensemble")));
        }
        let threshold = (*level as f64).powf(-gamma);
        let exceed = maxima.iter().filter(|&&m| m >= threshold).count();
        let n = maxima.len();
        let p = exceed as f64 / n as f64;
        let ci = stats::binomial_ci(exceed as u64, n as u64, &mut rng);
        curve.levels.push(*level);
        curve.p_hat.push(p);
        curve.ci_lo.push(ci.lo);
        curve.ci_hi.push(ci.hi);
        if exceed >= 10 && exceed < n {
            xs.push((*level as f64).ln());
            ys.push(p.ln());
        }
    }
    if xs.len() >= 3 {
        curve.slope = Some(stats::ols(&xs, &ys)?);
    }
    Ok(curve)
}

/// Threshold exceedance probabilities are monotone in the exponent:
/// larger `gamma` lowers the threshold `n^-gamma`.
pub fn exceedance_at(maxima: &[f64], level: u32, gamma: f64) -> f64 {
    let threshold = (level as f64).powf(-gamma);
    maxima.iter().filter(|&&m| m >= threshold).count() as f64 / maxima.len() as f64
}

/// The gauge `exp(-sqrt(6 log2) sqrt(n (log n + alpha log log n)))`.
pub fn gauge(n: u32, alpha: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::Config(format!(
            "gauge needs n >= 3 for the iterated logarithm, got {n}"
        )));
    }
    let nf = n as f64;
    Ok((-gauge_gamma() * (nf * (nf.ln() + alpha * nf.ln().ln())).sqrt()).exp())
}

/// Value of the exponent-balance quadratic `log2 l^2 g^2 - l g^2 + 3/2`.
pub fn gauge_quadratic(gamma: f64, lambda: f64) -> f64 {
    LN_2 * lambda * lambda * gamma * gamma - lambda * gamma * gamma + 1.5
}

/// The optimal gauge exponents: the smallest `gamma` for which the balance
/// quadratic has a real root, and that (double) root.
pub fn gauge_exponents() -> (f64, f64) {
    let gamma = gauge_gamma();
    // At the minimal gamma the discriminant g^4 - 6 log2 g^2 vanishes and
    // the double root is g^2 / (2 log2 g^2) = 1 / (2 log2).
    let lambda = 1.0 / (2.0 * LN_2);
    (gamma, lambda)
}

/// Mass carried by intervals at or below the threshold:
/// `sum of m 1{m <= threshold}`.
pub fn enf_sum(masses: &DyadicMasses, threshold: f64) -> f64 {
    masses
        .masses
        .iter()
        .filter(|&&m| m <= threshold)
        .sum::<f64>()
}

/// Mean of per-replica thresholded sums with bootstrap CI.
pub fn enf_estimate(replica_sums: &[f64]) -> Result<Estimate> {
    stats::bootstrap_mean(replica_sums)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CoverReport {
    pub from_level: u32,
    pub s: f64,
    /// `sum over selected intervals of |I|^s` where selection keeps mass
    /// at or above the per-level threshold.
    pub cover_sum: f64,
    /// `total * sum over k >= n of 2^(-k s/2)` for the same realization.
    pub bound: f64,
    /// Whether `2^(-k s/2) <= f(k)` held on every included level, which is
    /// the regime where the bound applies.
    pub condition_met: bool,
}

/// Cover-sum diagnostic over the levels of one realization. `thresholds`
/// maps each level to its selection threshold `f(k)`.
pub fn cover_sum(
    levels: &[DyadicMasses],
    thresholds: impl Fn(u32) -> f64,
    s: f64,
) -> Result<CoverReport> {
    if !(s > 0.0) {
        return Err(Error::Config(format!("exponent s must be positive, got {s}")));
    }
    if levels.is_empty() {
        return Err(Error::Config("no levels supplied".into()));
    }
    let from_level = levels.iter().map(|m| m.level).min().unwrap();
    let total = levels[0].total();
    let mut sum = 0.0;
    let mut bound_tail = 0.0;
    let mut condition_met = true;
    for masses in levels {
        let k = masses.level;
        let f_k = thresholds(k);
        let interval_len = 2f64.powi(-(k as i32));
        let selected = masses.masses.iter().filter(|&&m| m >= f_k).count();
        sum += selected as f64 * interval_len.powf(s);
        bound_tail += interval_len.powf(s / 2.0);
        if interval_len.powf(s / 2.0) > f_k {
            condition_met = false;
        }
    }
    Ok(CoverReport {
        from_level,
        s,
        cover_sum: sum,
        bound: total * bound_tail,
        condition_met,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{FieldKind, FieldSpec};
    use crate::measure::seneta_heyde_masses;
    use crate::sampler::CholeskySampler;

    fn sh_sampler(n: u32) -> CholeskySampler {
        let m = 1usize << (n + 2);
        let spec = FieldSpec::coupled(FieldKind::StarY, m).unwrap();
        CholeskySampler::new(spec).unwrap()
    }

    fn sh_masses_from(sampler: &CholeskySampler, n: u32, seed: u64, stream: u64) -> DyadicMasses {
        let field = sampler.sample(&mut RngStream::new(seed, stream));
        seneta_heyde_masses(&field, n).unwrap()
    }

    fn sh_masses(n: u32, seed: u64, stream: u64) -> DyadicMasses {
        sh_masses_from(&sh_sampler(n), n, seed, stream)
    }

    #[test]
    fn max_dyadic_families() {
        let masses = sh_masses(5, 60, 0);
        let all = max_dyadic(&masses, Parity::All).unwrap();
        let even = max_dyadic(&masses, Parity::Even).unwrap();
        let odd = max_dyadic(&masses, Parity::Odd).unwrap();
        assert_eq!(all, even.max(odd));

        let level0 = masses.coarsen_to(0).unwrap();
        assert_eq!(max_dyadic(&level0, Parity::All).unwrap(), level0.total());
        assert!(max_dyadic(&level0, Parity::Even).is_err());
    }

    #[test]
    fn max_dyadic_monotone_in_level() {
        let sampler = sh_sampler(6);
        for stream in 0..20 {
            let fine = sh_masses_from(&sampler, 6, 61, stream);
            let coarse = fine.coarsen_to(5).unwrap();
            let max_fine = max_dyadic(&fine, Parity::All).unwrap();
            let max_coarse = max_dyadic(&coarse, Parity::All).unwrap();
            assert!(max_coarse >= max_fine);
        }
    }

    #[test]
    fn gauge_values_and_monotonicity() {
        // Direct arithmetic evaluation at n = 8, alpha = 1.
        let n = 8.0f64;
        let expected = (-gauge_gamma() * (n * (n.ln() + n.ln().ln())).sqrt()).exp();
        assert_eq!(gauge(8, 1.0).unwrap(), expected);
        assert!(expected > 0.0 && expected < 1.0);

        for n in 3..20 {
            assert!(gauge(n + 1, 1.0).unwrap() < gauge(n, 1.0).unwrap());
        }
        assert!(gauge(10, 2.0).unwrap() < gauge(10, 1.0).unwrap());
        assert!(gauge(2, 1.0).is_err());
    }

    #[test]
    fn gauge_exponents_solve_quadratic() {
        let (gamma, lambda) = gauge_exponents();
        assert!((gamma - (6.0 * LN_2).sqrt()).abs() < 1e-15);
        assert!((lambda - 1.0 / (2.0 * LN_2)).abs() < 1e-15);
        assert!(gauge_quadratic(gamma, lambda).abs() < 1e-12);
        // Double root: the discriminant vanishes at the minimal gamma.
        let disc = gamma.powi(4) - 6.0 * LN_2 * gamma * gamma;
        assert!(disc.abs() < 1e-12);
        // Root formula cross-check.
        assert!((lambda - 6.0 * LN_2 / (12.0 * LN_2 * LN_2)).abs() < 1e-12);
    }

    #[test]
    fn enf_thresholds() {
        let masses = sh_masses(5, 62, 0);
        let total = masses.total();
        assert_eq!(enf_sum(&masses, f64::INFINITY), {
            // Linear sum for comparison; allow the pairwise-vs-linear gap.
            let linear: f64 = masses.masses.iter().sum();
            linear
        });
        assert!((enf_sum(&masses, f64::INFINITY) - total).abs() < 1e-12 * total);
        assert_eq!(enf_sum(&masses, 0.0), 0.0);
        let mid = stats::median(&masses.masses);
        let part = enf_sum(&masses, mid);
        assert!(part > 0.0 && part < total);
    }

    #[test]
    fn modulus_decay_trend() {
        let n_rep = 800;
        let mut per_level = Vec::new();
        for &level in &[4u32, 6, 8] {
            let sampler = sh_sampler(level);
            let maxima: Vec<f64> = (0..n_rep)
                .map(|r| {
                    let masses = sh_masses_from(&sampler, level, 63 + level as u64, r);
                    max_dyadic(&masses, Parity::Even).unwrap()
                })
                .collect();
            per_level.push((level, maxima));
        }
        let curve = modulus_decay(&per_level, 0.25).unwrap();
        // Nonincreasing trend within CI overlap.
        for w in 0..curve.levels.len() - 1 {
            assert!(
                curve.p_hat[w + 1] <= curve.ci_hi[w] + 1e-12,
                "level {} -> {}: {} vs {}",
                curve.levels[w],
                curve.levels[w + 1],
                curve.p_hat[w + 1],
                curve.ci_hi[w]
            );
        }
        // Threshold monotonicity in gamma.
        for (level, maxima) in &per_level {
            let lo = exceedance_at(maxima, *level, 0.2);
            let hi = exceedance_at(maxima, *level, 0.4);
            assert!(hi >= lo);
        }
        assert!(modulus_decay(&per_level, 0.7).is_err());
    }

    #[test]
    fn cover_sum_bound_and_monotonicity() {
        let spec = FieldSpec::coupled(FieldKind::StarY, 1 << 10).unwrap();
        let field = CholeskySampler::new(spec)
            .unwrap()
            .sample(&mut RngStream::new(64, 7));
        let all_levels: Vec<DyadicMasses> = (4..=8)
            .map(|k| seneta_heyde_masses(&field, k).unwrap())
            .collect();
        let s = 1.0;
        // Threshold comfortably above 2^(-k s/2) so the bound applies.
        let f = |k: u32| 2f64.powf(-(k as f64) * s / 2.0);
        let report = cover_sum(&all_levels, f, s).unwrap();
        assert!(report.condition_met);
        assert!(report.cover_sum <= report.bound, "{report:?}");

        // Fewer levels shrink the sum.
        let tail_report = cover_sum(&all_levels[2..], f, s).unwrap();
        assert!(tail_report.cover_sum <= report.cover_sum);

        // Doubling s shrinks every term.
        let steep = cover_sum(&all_levels, f, 2.0 * s).unwrap();
        assert!(steep.cover_sum <= report.cover_sum);
    }
}
