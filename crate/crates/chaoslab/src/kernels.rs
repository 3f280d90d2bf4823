//! Closed-form covariance kernels of the exactly scaling field and its
//! star-scaling companion, plus the deterministic scale-invariance checks
//! built on them.
//!
//! Both kernels are stationary on the line and vanish beyond unit distance:
//!
//! ```text
//! exact:  t + 1 - e^t d   (d <= e^-t),   -log d           (e^-t <= d <= 1)
//! star:   t + d - e^t d   (d <= e^-t),   -log d + d - 1   (e^-t <= d <= 1)
//! ```
//!
//! with `d = |x - y|`. The branches agree at `d = e^-t` and at `d = 1`, so
//! ties may be resolved either way.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Which Gaussian field a grid sample realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    /// Exactly scale invariant field: full cone above the point.
    ExactX,
    /// Star field: cone truncated below unit height, `Y_t = X_t - X_0`.
    StarY,
}

impl FieldKind {
    pub fn code(self) -> u32 {
        match self {
            FieldKind::ExactX => 0,
            FieldKind::StarY => 1,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(FieldKind::ExactX),
            1 => Ok(FieldKind::StarY),
            other => Err(Error::Config(format!("unknown field kind code {other}"))),
        }
    }
}

/// Grid description of a field on the unit interval.
///
/// `m` grid points sit at cell centers `(i + 1/2) / m`; the log-scale
/// horizon `t` controls the short-distance cutoff `e^-t` of the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub kind: FieldKind,
    pub t: f64,
    pub m: usize,
}

impl FieldSpec {
    pub fn new(kind: FieldKind, t: f64, m: usize) -> Result<Self> {
        if !(t >= 0.0) {
            return Err(Error::Config(format!("horizon t must be >= 0, got {t}")));
        }
        if m == 0 || !m.is_power_of_two() {
            return Err(Error::Config(format!(
                "grid size m must be a positive power of two, got {m}"
            )));
        }
        Ok(FieldSpec { kind, t, m })
    }

    /// Default resolution coupling: grid spacing equals the kernel cutoff,
    /// `e^-t = 1/m`.
    pub fn coupled(kind: FieldKind, m: usize) -> Result<Self> {
        Self::new(kind, (m as f64).ln(), m)
    }

    /// Grid point `i` at the cell center `(i + 1/2)/m`.
    pub fn grid_point(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.m as f64
    }

    /// Kernel value between two grid points.
    pub fn cov(&self, x: f64, y: f64) -> f64 {
        match self.kind {
            FieldKind::ExactX => cov_exact(x, y, self.t),
            FieldKind::StarY => cov_star(x, y, self.t),
        }
    }

    /// Pointwise variance, the kernel diagonal. Constant over the grid.
    pub fn variance(&self) -> f64 {
        match self.kind {
            FieldKind::ExactX => self.t + 1.0,
            FieldKind::StarY => self.t,
        }
    }
}

/// Covariance of the exact field at horizon `t`.
pub fn cov_exact(x: f64, y: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    let d = (x - y).abs();
    let cutoff = (-t).exp();
    if d <= cutoff {
        t + 1.0 - d / cutoff
    } else if d <= 1.0 {
        -d.ln()
    } else {
        0.0
    }
}

/// Covariance of the star field `Y_t = X_t - X_0` at horizon `t`.
pub fn cov_star(x: f64, y: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    let d = (x - y).abs();
    let cutoff = (-t).exp();
    if d <= cutoff {
        t + d - d / cutoff
    } else if d <= 1.0 {
        -d.ln() + d - 1.0
    } else {
        0.0
    }
}

/// Variance of the common cone factor `X(I)` of an interval of length `l`:
/// the hyperbolic area of the cone over the interval, `log(1/l)`.
pub fn cone_variance(l: f64) -> Result<f64> {
    if !(l > 0.0 && l <= 1.0) {
        return Err(Error::Config(format!(
            "interval length must lie in (0, 1], got {l}"
        )));
    }
    Ok(-l.ln())
}

/// Deterministic check of the kernel-level scale invariance identity
///
/// ```text
/// cov_exact(x, y, t) - log(1/l) = cov_exact(x/l, y/l, t - log(1/l))
/// ```
///
/// over the supplied pairs in `[0, l]`. Returns the maximum absolute
/// deviation, which is zero up to floating point for every dyadic `l`.
pub fn verify_scale_kernel(l: f64, t: f64, pairs: &[(f64, f64)]) -> Result<f64> {
    let log_inv_l = cone_variance(l)?;
    if t < log_inv_l {
        return Err(Error::Config(format!(
            "horizon t = {t} below log(1/l) = {log_inv_l}"
        )));
    }
    let mut max_dev: f64 = 0.0;
    for &(x, y) in pairs {
        if !(0.0..=l).contains(&x) || !(0.0..=l).contains(&y) {
            return Err(Error::Config(format!(
                "pair ({x}, {y}) outside [0, {l}]"
            )));
        }
        let restricted = cov_exact(x, y, t) - log_inv_l;
        let rescaled = cov_exact(x / l, y / l, t - log_inv_l);
        max_dev = max_dev.max((restricted - rescaled).abs());
    }
    Ok(max_dev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    const TOL: f64 = 1e-12;

    #[test]
    fn exact_kernel_examples() {
        assert!((cov_exact(0.3, 0.3, 2.0) - 3.0).abs() < TOL);
        assert_eq!(cov_exact(0.0, 1.0, 5.0), 0.0);
        // Branch continuity at d = e^-t.
        let d = (-1.0f64).exp();
        assert!((cov_exact(0.0, d, 1.0) - 1.0).abs() < TOL);
        assert!((cov_exact(0.0, d * (1.0 + 1e-15), 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn star_kernel_examples() {
        let t = 4.0 * std::f64::consts::LN_2;
        assert!((cov_star(0.5, 0.5, t) - t).abs() < TOL);
        assert_eq!(cov_star(0.0, 1.0, 3.0), 0.0);
        let expected = std::f64::consts::LN_2 - 0.5;
        assert!((cov_star(0.1, 0.6, 3.0) - expected).abs() < TOL);
    }

    #[test]
    fn cone_variance_examples() {
        assert_eq!(cone_variance(1.0).unwrap(), 0.0);
        assert!((cone_variance(0.5).unwrap() - std::f64::consts::LN_2).abs() < TOL);
        for k in 2u32..10 {
            let l = 2f64.powi(-(k as i32) + 1);
            let expected = (k - 1) as f64 * std::f64::consts::LN_2;
            assert!((cone_variance(l).unwrap() - expected).abs() < TOL);
        }
        assert!(cone_variance(0.0).is_err());
        assert!(cone_variance(1.5).is_err());
    }

    #[test]
    fn scale_identity_on_random_pairs() {
        let mut rng = RngStream::new(7, 0);
        let pairs: Vec<(f64, f64)> = (0..100)
            .map(|_| (0.5 * rng.uniform(), 0.5 * rng.uniform()))
            .collect();
        let dev = verify_scale_kernel(0.5, 3.0, &pairs).unwrap();
        assert!(dev <= 1e-12, "deviation {dev}");
    }

    #[test]
    fn scale_identity_trivial_cases() {
        // l = 1 is the identity map.
        let pairs = [(0.2, 0.9), (0.5, 0.5)];
        assert_eq!(verify_scale_kernel(1.0, 2.0, &pairs).unwrap(), 0.0);
        // Coincident pair at the minimal horizon: both sides give the variance 1.
        let dev = verify_scale_kernel(0.25, 4f64.ln(), &[(0.1, 0.1)]).unwrap();
        assert!(dev < TOL);
    }

    #[test]
    fn scale_identity_rejects_bad_input() {
        assert!(verify_scale_kernel(0.5, 0.1, &[(0.1, 0.2)]).is_err());
        assert!(verify_scale_kernel(0.5, 3.0, &[(0.7, 0.2)]).is_err());
    }

    #[test]
    fn kernel_decomposition_exact_minus_star_is_unit_cone() {
        // cov_exact - cov_star equals the t = 0 kernel at every distance.
        for &t in &[0.5, 2.0, 7.3] {
            for i in 0..=100 {
                let d = i as f64 / 100.0;
                let lhs = cov_exact(0.0, d, t) - cov_star(0.0, d, t);
                let rhs = cov_exact(0.0, d, 0.0);
                assert!((lhs - rhs).abs() < TOL, "t={t} d={d}");
            }
        }
    }

    proptest! {
        #[test]
        fn kernels_symmetric(x in 0.0..1.0f64, y in 0.0..1.0f64, t in 0.0..10.0f64) {
            prop_assert_eq!(cov_exact(x, y, t), cov_exact(y, x, t));
            prop_assert_eq!(cov_star(x, y, t), cov_star(y, x, t));
        }

        #[test]
        fn kernels_continuous_at_branch_boundaries(t in 0.05..8.0f64) {
            let cut = (-t).exp();
            for &(a, b) in &[(cut * (1.0 - 1e-12), cut * (1.0 + 1e-12)), (1.0 - 1e-12, 1.0 + 1e-12)] {
                prop_assert!((cov_exact(0.0, a, t) - cov_exact(0.0, b, t)).abs() < 1e-10);
                prop_assert!((cov_star(0.0, a, t) - cov_star(0.0, b, t)).abs() < 1e-10);
            }
        }

        #[test]
        fn scale_identity_dyadic(k in 1u32..6, t_extra in 0.0..4.0f64, x in 0.0..1.0f64, y in 0.0..1.0f64) {
            let l = 2f64.powi(-(k as i32));
            let t = -l.ln() + t_extra;
            let dev = verify_scale_kernel(l, t, &[(x * l, y * l)]).unwrap();
            prop_assert!(dev < 1e-12);
        }
    }
}
