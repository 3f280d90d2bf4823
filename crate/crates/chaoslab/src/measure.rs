//! Measures built from field samples: the subcritical family, the signed
//! derivative normalization at the critical parameter, and the
//! deterministic square-root normalization sharing its limit.
//!
//! All masses are midpoint-rule quadratures on the sampling grid, so
//! refining a dyadic level splits each mass exactly into its children.

use crate::error::{Error, Result};
use crate::kernels::FieldKind;
use crate::sampler::FieldSample;
use crate::stats::{self, Estimate};
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

/// Critical inverse-temperature `sqrt(2)`.
pub const BETA_CRITICAL: f64 = SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureVariant {
    /// `exp(beta X - beta^2/2 var)` for `beta` below critical.
    Subcritical { beta: f64 },
    /// Signed density `(sqrt2 var - X) exp(sqrt2 X - var)`.
    Derivative,
    /// `sqrt(t) exp(sqrt2 X - var)`.
    SenetaHeyde,
}

impl MeasureVariant {
    pub fn validate(&self) -> Result<()> {
        if let MeasureVariant::Subcritical { beta } = self {
            // beta = 0 is accepted as the degenerate uniform-density input.
            if !(*beta >= 0.0 && *beta < BETA_CRITICAL) {
                return Err(Error::Config(format!(
                    "subcritical beta must lie in [0, sqrt2), got {beta}"
                )));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self {
            MeasureVariant::Subcritical { beta } => format!("subcritical(beta={beta})"),
            MeasureVariant::Derivative => "derivative".into(),
            MeasureVariant::SenetaHeyde => "seneta-heyde".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureKind {
    pub variant: MeasureVariant,
    pub field_kind: FieldKind,
}

/// Masses of all `2^level` dyadic intervals at one level.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicMasses {
    pub level: u32,
    pub masses: Vec<f64>,
    pub kind: MeasureKind,
    pub t: f64,
}

impl DyadicMasses {
    /// Total mass, folded pairwise so it equals the level-0 coarsening (and
    /// hence `m0 + m1`) bit-for-bit.
    pub fn total(&self) -> f64 {
        let mut xs = self.masses.clone();
        while xs.len() > 1 {
            xs = xs.chunks(2).map(|c| c[0] + c[1]).collect();
        }
        xs[0]
    }

    /// Masses at a coarser level, summing children pairwise. Exact: no
    /// quadrature is redone.
    pub fn coarsen_to(&self, level: u32) -> Result<DyadicMasses> {
        if level > self.level {
            return Err(Error::Config(format!(
                "cannot coarsen level {} masses to finer level {level}",
                self.level
            )));
        }
        let mut masses = self.masses.clone();
        for _ in level..self.level {
            masses = masses.chunks(2).map(|c| c[0] + c[1]).collect();
        }
        Ok(DyadicMasses {
            level,
            masses,
            kind: self.kind,
            t: self.t,
        })
    }

    /// Mass of the prefix interval `[0, k/2^level]`.
    pub fn prefix(&self, k: usize) -> f64 {
        self.masses[..k].iter().sum()
    }
}

fn pointwise_density(field: &FieldSample, variant: MeasureVariant) -> Vec<f64> {
    let t = field.spec.t;
    match variant {
        MeasureVariant::Subcritical { beta } => field
            .values
            .iter()
            .zip(&field.variance_profile)
            .map(|(x, v)| (beta * x - 0.5 * beta * beta * v).exp())
            .collect(),
        MeasureVariant::Derivative => field
            .values
            .iter()
            .zip(&field.variance_profile)
            .map(|(x, v)| (SQRT_2 * v - x) * (SQRT_2 * x - v).exp())
            .collect(),
        MeasureVariant::SenetaHeyde => {
            let norm = t.sqrt();
            field
                .values
                .iter()
                .zip(&field.variance_profile)
                .map(|(x, v)| norm * (SQRT_2 * x - v).exp())
                .collect()
        }
    }
}

fn quadrature_masses(
    field: &FieldSample,
    variant: MeasureVariant,
    level: u32,
) -> Result<DyadicMasses> {
    variant.validate()?;
    let cells = 1usize
        .checked_shl(level)
        .ok_or_else(|| Error::Config(format!("level {level} out of range")))?;
    if cells > field.spec.m {
        return Err(Error::Config(format!(
            "level {level} too fine for grid of {} points",
            field.spec.m
        )));
    }
    let h = 1.0 / field.spec.m as f64;
    // Pairwise binary-tree reduction from grid cells: a parent mass is the
    // literal float sum of its two children, so refinement additivity is
    // bit-exact at every level.
    let mut masses: Vec<f64> = pointwise_density(field, variant)
        .iter()
        .map(|d| d * h)
        .collect();
    while masses.len() > cells {
        masses = masses.chunks(2).map(|c| c[0] + c[1]).collect();
    }
    Ok(DyadicMasses {
        level,
        masses,
        kind: MeasureKind {
            variant,
            field_kind: field.spec.kind,
        },
        t: field.spec.t,
    })
}

/// Dyadic masses of the subcritical measure with parameter `beta`.
pub fn subcritical_masses(field: &FieldSample, beta: f64, level: u32) -> Result<DyadicMasses> {
    quadrature_masses(field, MeasureVariant::Subcritical { beta }, level)
}

/// Dyadic masses of the derivative normalization; signed at finite horizon.
pub fn derivative_masses(field: &FieldSample, level: u32) -> Result<DyadicMasses> {
    quadrature_masses(field, MeasureVariant::Derivative, level)
}

/// Dyadic masses of the square-root normalization; strictly positive.
pub fn seneta_heyde_masses(field: &FieldSample, level: u32) -> Result<DyadicMasses> {
    quadrature_masses(field, MeasureVariant::SenetaHeyde, level)
}

/// Masses of the two unit-interval halves.
pub fn halves(masses: &DyadicMasses) -> Result<(f64, f64)> {
    if masses.level < 1 {
        return Err(Error::Config(
            "halves need masses at level >= 1".into(),
        ));
    }
    let level1 = masses.coarsen_to(1)?;
    Ok((level1.masses[0], level1.masses[1]))
}

/// Sample mean of `Y^h` over an ensemble of totals, with bootstrap CI.
/// `h = 0` returns exactly 1.
pub fn estimate_moment(totals: &[f64], h: f64) -> Result<Estimate> {
    if totals.is_empty() {
        return Err(Error::Config("empty ensemble".into()));
    }
    if !(0.0..1.0).contains(&h) {
        return Err(Error::Config(format!("moment order must be in [0, 1), got {h}")));
    }
    let powered: Vec<f64> = totals.iter().map(|y| y.powf(h)).collect();
    stats::bootstrap_mean(&powered)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::FieldSpec;
    use crate::rng::RngStream;
    use crate::sampler::CholeskySampler;
    use crate::stats;

    fn sample(kind: FieldKind, t: f64, m: usize, seed: u64, stream: u64) -> FieldSample {
        let spec = FieldSpec::new(kind, t, m).unwrap();
        CholeskySampler::new(spec)
            .unwrap()
            .sample(&mut RngStream::new(seed, stream))
    }

    #[test]
    fn beta_zero_gives_interval_lengths() {
        let field = sample(FieldKind::ExactX, 3.0, 64, 1, 0);
        let masses = subcritical_masses(&field, 0.0, 4).unwrap();
        for &m in &masses.masses {
            assert!((m - 2f64.powi(-4)).abs() < 1e-15);
        }
    }

    #[test]
    fn subcritical_mean_total_is_one() {
        let spec = FieldSpec::new(FieldKind::ExactX, 4.0, 128).unwrap();
        let sampler = CholeskySampler::new(spec).unwrap();
        let n = 10_000;
        let totals: Vec<f64> = (0..n)
            .map(|r| {
                let f = sampler.sample(&mut RngStream::new(21, r));
                subcritical_masses(&f, 0.5, 0).unwrap().total()
            })
            .collect();
        let m = stats::mean(&totals);
        let se = stats::standard_error(&totals);
        assert!((m - 1.0).abs() < 3.0 * se, "mean {m}, se {se}");
    }

    #[test]
    fn derivative_mean_total_is_zero() {
        let spec = FieldSpec::new(FieldKind::ExactX, 4.0, 128).unwrap();
        let sampler = CholeskySampler::new(spec).unwrap();
        let n = 10_000;
        let totals: Vec<f64> = (0..n)
            .map(|r| {
                let f = sampler.sample(&mut RngStream::new(22, r));
                derivative_masses(&f, 0).unwrap().total()
            })
            .collect();
        let m = stats::mean(&totals);
        let se = stats::standard_error(&totals);
        assert!(m.abs() < 3.0 * se, "mean {m}, se {se}");
    }

    #[test]
    fn derivative_negative_fraction_decreases_with_horizon() {
        let n = 10_000;
        let frac_neg = |t: f64, seed: u64| -> f64 {
            let spec = FieldSpec::new(FieldKind::ExactX, t, 256).unwrap();
            let sampler = CholeskySampler::new(spec).unwrap();
            let neg = (0..n)
                .filter(|&r| {
                    let f = sampler.sample(&mut RngStream::new(seed, r));
                    derivative_masses(&f, 0).unwrap().total() < 0.0
                })
                .count();
            neg as f64 / n as f64
        };
        let early = frac_neg(2.0, 23);
        let late = frac_neg(6.0, 24);
        assert!(late < early, "negative fraction {early} -> {late}");
    }

    #[test]
    fn seneta_heyde_mean_total_matches_normalization() {
        // Kept at a mild horizon: the total is lognormal-heavy-tailed and
        // the sample mean converges slowly for large t.
        let t = 2.0;
        let spec = FieldSpec::new(FieldKind::StarY, t, 128).unwrap();
        let sampler = CholeskySampler::new(spec).unwrap();
        let n = 20_000;
        let totals: Vec<f64> = (0..n)
            .map(|r| {
                let f = sampler.sample(&mut RngStream::new(25, r));
                seneta_heyde_masses(&f, 0).unwrap().total()
            })
            .collect();
        let m = stats::mean(&totals);
        let se = stats::standard_error(&totals);
        assert!((m - t.sqrt()).abs() < 4.0 * se, "mean {m}, se {se}");
    }

    #[test]
    fn seneta_heyde_masses_positive() {
        for r in 0..50 {
            let field = sample(FieldKind::StarY, 5.0, 256, 26, r);
            let masses = seneta_heyde_masses(&field, 6).unwrap();
            assert!(masses.masses.iter().all(|&m| m > 0.0));
        }
    }

    #[test]
    fn refinement_additivity_exact() {
        let field = sample(FieldKind::ExactX, 5.0, 256, 27, 0);
        for variant in [
            MeasureVariant::Subcritical { beta: 0.7 },
            MeasureVariant::Derivative,
            MeasureVariant::SenetaHeyde,
        ] {
            let fine = quadrature_masses(&field, variant, 6).unwrap();
            let coarse = quadrature_masses(&field, variant, 5).unwrap();
            let folded = fine.coarsen_to(5).unwrap();
            for (a, b) in coarse.masses.iter().zip(&folded.masses) {
                assert_eq!(a, b, "{}", variant.label());
            }
        }
    }

    #[test]
    fn level_too_fine_is_rejected() {
        let field = sample(FieldKind::ExactX, 3.0, 32, 28, 0);
        assert!(seneta_heyde_masses(&field, 6).is_err());
        assert!(seneta_heyde_masses(&field, 5).is_ok());
    }

    #[test]
    fn halves_sum_to_total() {
        let field = sample(FieldKind::ExactX, 5.0, 256, 29, 0);
        let masses = seneta_heyde_masses(&field, 5).unwrap();
        let (m0, m1) = halves(&masses).unwrap();
        assert!((m0 + m1 - masses.total()).abs() < 1e-15 * masses.total().abs().max(1.0));
        // Degenerate beta = 0 field splits evenly.
        let flat = subcritical_masses(&field, 0.0, 3).unwrap();
        let (f0, f1) = halves(&flat).unwrap();
        assert!((f0 - 0.5).abs() < 1e-15);
        assert!((f1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn halves_symmetric_in_law() {
        let spec = FieldSpec::new(FieldKind::ExactX, 5.0, 128).unwrap();
        let sampler = CholeskySampler::new(spec).unwrap();
        let n = 5_000;
        let mut m0s = Vec::with_capacity(n);
        let mut m1s = Vec::with_capacity(n);
        for r in 0..n {
            let f = sampler.sample(&mut RngStream::new(30, r as u64));
            let masses = seneta_heyde_masses(&f, 1).unwrap();
            m0s.push(masses.masses[0]);
            m1s.push(masses.masses[1]);
        }
        let e0 = stats::bootstrap_mean(&m0s).unwrap();
        let e1 = stats::bootstrap_mean(&m1s).unwrap();
        assert!(e0.ci.overlaps(&e1.ci), "{e0:?} vs {e1:?}");
    }

    #[test]
    fn moment_estimates() {
        let spec = FieldSpec::coupled(FieldKind::ExactX, 256).unwrap();
        let sampler = CholeskySampler::new(spec).unwrap();
        let totals: Vec<f64> = (0..4000)
            .map(|r| {
                let f = sampler.sample(&mut RngStream::new(31, r));
                seneta_heyde_masses(&f, 0).unwrap().total()
            })
            .collect();
        let at_zero = estimate_moment(&totals, 0.0).unwrap();
        assert_eq!(at_zero.value, 1.0);

        // Stability of the h = 0.5 estimate under doubling.
        let half_est = estimate_moment(&totals[..2000], 0.5).unwrap();
        let full_est = estimate_moment(&totals, 0.5).unwrap();
        assert!(
            (full_est.value - half_est.value).abs() < half_est.ci.width(),
            "half {half_est:?} full {full_est:?}"
        );

        // (1 - h) E Y^h stays bounded as h -> 1: no blow-up faster than
        // 1/(1 - h). At finite horizon the mean is finite, so the scaled
        // sequence may decrease; it must not grow.
        let scaled: Vec<f64> = [0.9, 0.95, 0.99]
            .iter()
            .map(|&h| (1.0 - h) * estimate_moment(&totals, h).unwrap().value)
            .collect();
        assert!(scaled.iter().all(|v| v.is_finite() && *v < 2.0), "{scaled:?}");
        assert!(scaled[2] <= 2.0 * scaled[0], "scaled moments grew: {scaled:?}");

        assert!(estimate_moment(&[], 0.5).is_err());
    }
}
