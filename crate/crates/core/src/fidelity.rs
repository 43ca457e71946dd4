//! Closed-form transfer of expectation values between two states of known
//! fidelity, and the two-sided constraint intervals built from it.
//!
//! For density operators sigma, sigma' with fidelity F(sigma, sigma') = z and
//! any measurement operator 0 <= M <= I,
//!
//!     G-(Tr[sigma' M], z)  <=  Tr[sigma M]  <=  G+(Tr[sigma' M], z),
//!
//! where G- and G+ are the piecewise closed forms below. Both SDP families
//! use these to widen observed rates into intervals that remain valid for
//! the truncated model states.

use crate::error::{Error, Result};

/// Slack allowed when clamping probabilities that drift marginally outside
/// [0, 1] from floating-point accumulation.
const CLAMP_SLACK: f64 = 1e-12;

fn check_unit_interval(name: &str, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("{name} is not finite")));
    }
    if x < 0.0 || x > 1.0 {
        return Err(Error::Domain(format!("{name} = {x} outside [0, 1]")));
    }
    Ok(x)
}

/// g_pm(y, z) = y + (1-z)(1-2y) +- 2 sqrt(z(1-z)y(1-y)).
pub fn g_pm(y: f64, z: f64, plus: bool) -> Result<f64> {
    let y = check_unit_interval("y", y)?;
    let z = check_unit_interval("z", z)?;
    let root = 2.0 * (z * (1.0 - z) * y * (1.0 - y)).sqrt();
    let base = y + (1.0 - z) * (1.0 - 2.0 * y);
    Ok(if plus { base + root } else { base - root })
}

/// Lower transfer bound: g_-(y, z) on the branch y > 1 - z, else 0.
///
/// The true value lies in [0, 1]; the branch edges sit exactly at 0, so
/// rounding excursions are clamped away.
pub fn expectation_lower(y: f64, z: f64) -> Result<f64> {
    if y > 1.0 - check_unit_interval("z", z)? {
        Ok(g_pm(y, z, false)?.clamp(0.0, 1.0))
    } else {
        check_unit_interval("y", y)?;
        Ok(0.0)
    }
}

/// Upper transfer bound: g_+(y, z) on the branch y < z, else 1.
pub fn expectation_upper(y: f64, z: f64) -> Result<f64> {
    if y < check_unit_interval("z", z)? {
        Ok(g_pm(y, z, true)?.clamp(0.0, 1.0))
    } else {
        check_unit_interval("y", y)?;
        Ok(1.0)
    }
}

/// A two-sided trace constraint [lo, hi] in probability space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintInterval {
    lo: f64,
    hi: f64,
}

impl ConstraintInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        let lo = check_unit_interval("lo", lo)?;
        let hi = check_unit_interval("hi", hi)?;
        if lo > hi {
            return Err(Error::Domain(format!("interval [{lo}, {hi}] is empty")));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Widen both ends by a relative factor, staying inside [0, 1].
    pub fn inflated(&self, rel: f64) -> Self {
        let w = self.width().max(self.hi.abs()) * rel;
        Self { lo: (self.lo - w).max(0.0), hi: (self.hi + w).min(1.0) }
    }
}

/// Interval [G-(Q, F_proj), G+(Q, F_proj)] for an observed rate Q.
///
/// Observed rates a hair outside [0, 1] (|excess| < 1e-12) are clamped with
/// a warning; anything larger is rejected.
pub fn constraint_interval(observed: f64, f_proj: f64) -> Result<ConstraintInterval> {
    let q = if observed < 0.0 || observed > 1.0 {
        if observed >= -CLAMP_SLACK && observed <= 1.0 + CLAMP_SLACK {
            log::warn!("clamping observed rate {observed} into [0, 1]");
            observed.clamp(0.0, 1.0)
        } else {
            return Err(Error::Domain(format!("observed rate {observed} outside [0, 1]")));
        }
    } else {
        observed
    };
    ConstraintInterval::new(expectation_lower(q, f_proj)?, expectation_upper(q, f_proj)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn g_pm_closed_form_values() {
        assert_abs_diff_eq!(g_pm(0.2, 0.9, true).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(g_pm(0.2, 0.9, false).unwrap(), 0.02, epsilon = 1e-12);
    }

    #[test]
    fn perfect_fidelity_is_identity() {
        for k in 0..=100 {
            let y = k as f64 / 100.0;
            assert_abs_diff_eq!(g_pm(y, 1.0, false).unwrap(), y, epsilon = 1e-14);
            assert_abs_diff_eq!(g_pm(y, 1.0, true).unwrap(), y, epsilon = 1e-14);
            assert_abs_diff_eq!(expectation_lower(y, 1.0).unwrap(), y, epsilon = 1e-14);
            assert_abs_diff_eq!(expectation_upper(y, 1.0).unwrap(), y, epsilon = 1e-14);
        }
    }

    #[test]
    fn piecewise_branches() {
        // y < z is false at equality: constant branch
        assert_eq!(expectation_upper(0.5, 0.5).unwrap(), 1.0);
        // y > 1 - z is false at 0.05 < 0.1
        assert_eq!(expectation_lower(0.05, 0.9).unwrap(), 0.0);
        assert_abs_diff_eq!(expectation_lower(0.2, 0.9).unwrap(), 0.02, epsilon = 1e-12);
        assert_abs_diff_eq!(expectation_upper(0.2, 0.9).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn interval_construction() {
        let i = constraint_interval(0.2, 0.9).unwrap();
        assert_abs_diff_eq!(i.lo(), 0.02, epsilon = 1e-12);
        assert_abs_diff_eq!(i.hi(), 0.5, epsilon = 1e-12);

        let i = constraint_interval(0.0, 0.99).unwrap();
        assert_eq!(i.lo(), 0.0);
        assert_abs_diff_eq!(i.hi(), 0.01, epsilon = 1e-12);

        // F_proj = 1 collapses to the observation itself
        let i = constraint_interval(0.37, 1.0).unwrap();
        assert_eq!(i.lo(), 0.37);
        assert_eq!(i.hi(), 0.37);
        assert!(i.contains(0.37));
    }

    #[test]
    fn clamp_slack_behaviour() {
        assert!(constraint_interval(-1e-13, 0.9).is_ok());
        assert!(constraint_interval(1.0 + 1e-13, 0.9).is_ok());
        assert!(constraint_interval(-1e-9, 0.9).is_err());
        assert!(constraint_interval(1.001, 0.9).is_err());
    }

    #[test]
    fn lower_never_exceeds_upper_and_monotonicity() {
        // grid sampling of the monotonicity the bounds rely on
        let grid: Vec<f64> = (0..=60).map(|k| k as f64 / 60.0).collect();
        for (yi, &y) in grid.iter().enumerate() {
            for (zi, &z) in grid.iter().enumerate() {
                let lo = expectation_lower(y, z).unwrap();
                let hi = expectation_upper(y, z).unwrap();
                assert!(lo <= hi + 1e-14, "lo > hi at y={y} z={z}");
                assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
                if yi > 0 {
                    let y2 = grid[yi - 1];
                    assert!(
                        expectation_lower(y2, z).unwrap() <= lo + 1e-12,
                        "G- not increasing in y"
                    );
                    assert!(
                        expectation_upper(y2, z).unwrap() <= hi + 1e-12,
                        "G+ not increasing in y"
                    );
                }
                if zi > 0 {
                    let z2 = grid[zi - 1];
                    assert!(
                        expectation_lower(y, z2).unwrap() <= lo + 1e-12,
                        "G- not increasing in z"
                    );
                    assert!(
                        expectation_upper(y, z2).unwrap() >= hi - 1e-12,
                        "G+ not decreasing in z"
                    );
                }
            }
        }
    }

    #[test]
    fn domain_errors() {
        assert!(g_pm(-0.1, 0.5, true).is_err());
        assert!(g_pm(0.5, 1.1, true).is_err());
        assert!(expectation_lower(f64::NAN, 0.5).is_err());
    }
}
