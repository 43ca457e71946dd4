//! Calibration of the phase-uniformity parameter q from a measured
//! interference fringe visibility, under the one-round-memory wrapped
//! Gaussian phase-diffusion model.
//!
//! The phase difference between adjacent pulses is modelled as Gaussian with
//! standard deviation sigma = sqrt(2 ln(1/V)); on the circle this becomes a
//! wrapped Gaussian. The uniformity parameter is then
//!
//!     q / 2pi = min_{phi_mid, phi_end}
//!         f_WG(phi_mid; 0, sigma) f_WG(phi_end; phi_mid, sigma)
//!         / f_WG(phi_end; 0, sigma sqrt(2))
//!
//! where the first phase is pinned to 0 by translation invariance (the
//! central drift of the diffusion drops out for the same reason and is not a
//! user input). The minimisation runs on a dense grid with local refinement
//! rather than trusting the stationary point reported for one particular
//! sigma; the stationary point is used as a cross-check in tests.
//!
//! This calibration is only meaningful for a phase process with one round of
//! memory; it makes no validity claim for longer correlations.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

/// Grid resolution of the coarse minimisation stage.
const COARSE_GRID: usize = 721;
/// Refinement grid per zoom stage.
const REFINE_GRID: usize = 25;
/// Stop refining once the search box is this small (radians).
const REFINE_TOL: f64 = 1e-10;

/// Gaussian phase-diffusion model linking visibility and sigma.
#[derive(Debug, Clone, Copy)]
pub struct PhaseDiffusionModel {
    pub sigma: f64,
    pub visibility: f64,
}

impl PhaseDiffusionModel {
    pub fn from_visibility(visibility: f64) -> Result<Self> {
        Ok(Self { sigma: sigma_from_visibility(visibility)?, visibility })
    }
}

/// sigma = sqrt(2 ln(1/V)) for visibility V in (0, 1].
pub fn sigma_from_visibility(visibility: f64) -> Result<f64> {
    if !(visibility > 0.0 && visibility <= 1.0) {
        return Err(Error::Domain(format!("visibility {visibility} outside (0, 1]")));
    }
    Ok((2.0 * (1.0 / visibility).ln()).sqrt())
}

/// Wrapped Gaussian density on [0, 2pi).
///
/// Truncated sum over translates with enough terms that the omitted tail
/// mass is below 1e-12; doubling the term count must not change the value
/// beyond that, which the tests verify.
pub fn wrapped_gaussian_pdf(x: f64, center: f64, sigma: f64) -> Result<f64> {
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::Domain(format!(
            "wrapped Gaussian needs sigma > 0, got {sigma}; the sigma = 0 limit \
             is a point mass and must be handled by the caller"
        )));
    }
    Ok(wrapped_gaussian_terms(x, center, sigma, wrap_terms(x, center, sigma)))
}

fn wrap_terms(x: f64, center: f64, sigma: f64) -> i64 {
    ((10.0 * sigma + (x - center).abs()) / TAU).ceil() as i64 + 1
}

fn wrapped_gaussian_terms(x: f64, center: f64, sigma: f64, k_max: i64) -> f64 {
    let inv = 1.0 / (sigma * (2.0 * PI).sqrt());
    let mut total = 0.0;
    for k in -k_max..=k_max {
        let d = (x - center + TAU * k as f64) / sigma;
        total += inv * (-0.5 * d * d).exp();
    }
    total
}

/// Result of the q minimisation: the value and where the minimum occurs
/// (with the first phase fixed at 0).
#[derive(Debug, Clone, Copy)]
pub struct UniformityMinimum {
    pub q: f64,
    pub phi_mid: f64,
    pub phi_end: f64,
}

/// Minimise the conditional phase density over the two free phases and
/// return q = 2pi * minimum.
pub fn q_from_sigma(sigma: f64) -> Result<UniformityMinimum> {
    q_from_sigma_with_origin(sigma, 0.0)
}

/// Same as [`q_from_sigma`] with an explicit first phase; the result must
/// not depend on it (translation invariance, spot-checked in tests).
pub fn q_from_sigma_with_origin(sigma: f64, origin: f64) -> Result<UniformityMinimum> {
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::Domain(format!("q calibration needs sigma > 0, got {sigma}")));
    }
    let sigma2 = sigma * 2.0f64.sqrt();
    let step = TAU / COARSE_GRID as f64;

    // On the uniform grid every factor depends only on a phase difference,
    // so three 1-D tables cover the whole 2-D objective.
    let mid_table: Vec<f64> = (0..COARSE_GRID)
        .map(|i| wrapped_gaussian_pdf(origin + i as f64 * step, origin, sigma).unwrap())
        .collect();
    let den_table: Vec<f64> = (0..COARSE_GRID)
        .map(|i| wrapped_gaussian_pdf(origin + i as f64 * step, origin, sigma2).unwrap())
        .collect();

    let mut best = f64::INFINITY;
    let mut best_ij = (0usize, 0usize);
    for i in 0..COARSE_GRID {
        let f_mid = mid_table[i];
        for j in 0..COARSE_GRID {
            let den = den_table[j];
            if den <= 0.0 {
                continue;
            }
            let diff = (j + COARSE_GRID - i) % COARSE_GRID;
            let val = f_mid * mid_table[diff] / den;
            if val < best {
                best = val;
                best_ij = (i, j);
            }
        }
    }
    if !best.is_finite() {
        return Err(Error::Domain(format!(
            "no evaluable grid point in the q minimisation at sigma={sigma}"
        )));
    }

    let objective = |mid: f64, end: f64| -> f64 {
        let den = wrapped_gaussian_terms(end, origin, sigma2, wrap_terms(end, origin, sigma2));
        if den <= 0.0 {
            return f64::INFINITY;
        }
        let a = wrapped_gaussian_terms(mid, origin, sigma, wrap_terms(mid, origin, sigma));
        let b = wrapped_gaussian_terms(end, mid, sigma, wrap_terms(end, mid, sigma));
        a * b / den
    };

    // local refinement: repeatedly zoom a small grid around the incumbent
    let mut mid = origin + best_ij.0 as f64 * step;
    let mut end = origin + best_ij.1 as f64 * step;
    let mut half = step;
    let mut value = best;
    while half > REFINE_TOL {
        let local_step = 2.0 * half / (REFINE_GRID - 1) as f64;
        let (mut next_mid, mut next_end, mut next_val) = (mid, end, value);
        for a in 0..REFINE_GRID {
            let m = mid - half + a as f64 * local_step;
            for b in 0..REFINE_GRID {
                let e = end - half + b as f64 * local_step;
                let v = objective(m, e);
                if v < next_val {
                    next_val = v;
                    next_mid = m;
                    next_end = e;
                }
            }
        }
        mid = next_mid;
        end = next_end;
        value = next_val;
        half *= 2.0 / (REFINE_GRID - 1) as f64 * 2.0;
    }
    if value > best + 1e-12 {
        return Err(Error::Domain(format!(
            "q refinement failed to improve on the grid minimum {best:.6e}"
        )));
    }

    Ok(UniformityMinimum {
        q: (TAU * value).clamp(0.0, 1.0),
        phi_mid: (mid - origin).rem_euclid(TAU),
        phi_end: (end - origin).rem_euclid(TAU),
    })
}

/// q from a measured fringe visibility: composition of the two steps above.
pub fn q_from_visibility(visibility: f64) -> Result<UniformityMinimum> {
    if !(visibility > 0.0 && visibility < 1.0) {
        return Err(Error::Domain(format!(
            "visibility {visibility} outside (0, 1); V = 1 means no phase diffusion"
        )));
    }
    q_from_sigma(sigma_from_visibility(visibility)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sigma_closed_form() {
        assert_eq!(sigma_from_visibility(1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(sigma_from_visibility(0.0019).unwrap(), 3.54003, epsilon = 5e-5);
        assert_abs_diff_eq!(
            sigma_from_visibility((-0.5f64).exp()).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert!(sigma_from_visibility(0.0).is_err());
        assert!(sigma_from_visibility(1.5).is_err());
    }

    #[test]
    fn model_roundtrip_invariant() {
        let m = PhaseDiffusionModel::from_visibility(0.37).unwrap();
        assert_abs_diff_eq!((-m.sigma * m.sigma / 2.0).exp(), m.visibility, epsilon = 1e-12);
    }

    #[test]
    fn wrapped_pdf_normalises() {
        for sigma in [0.5, 1.0, 3.54003] {
            let n = 20_000;
            let h = TAU / n as f64;
            let mut integral = 0.0;
            for i in 0..n {
                integral += wrapped_gaussian_pdf(i as f64 * h, 1.3, sigma).unwrap() * h;
            }
            assert_abs_diff_eq!(integral, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn wrapped_pdf_large_sigma_is_uniform() {
        for x in [0.0, 1.0, PI, 5.0] {
            let f = wrapped_gaussian_pdf(x, 0.0, 100.0).unwrap();
            assert_abs_diff_eq!(f, 1.0 / TAU, epsilon = 1e-10);
        }
    }

    #[test]
    fn doubling_terms_changes_nothing() {
        for (x, c, sigma) in [(PI, 0.0, 3.54003), (0.3, 2.0, 0.5), (5.9, 1.0, 1.0)] {
            let k = wrap_terms(x, c, sigma);
            let v1 = wrapped_gaussian_terms(x, c, sigma, k);
            let v2 = wrapped_gaussian_terms(x, c, sigma, 2 * k);
            assert_abs_diff_eq!(v1, v2, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_sigma_is_rejected() {
        assert!(wrapped_gaussian_pdf(0.0, 0.0, 0.0).is_err());
        assert!(q_from_sigma(0.0).is_err());
    }

    #[test]
    fn q_uniform_limit() {
        let m = q_from_sigma(100.0).unwrap();
        assert_abs_diff_eq!(m.q, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn q_deterministic_limit() {
        // nearly deterministic phases carry no usable randomness
        let m = q_from_sigma(0.05).unwrap();
        assert!(m.q < 1e-12, "q = {}", m.q);
    }

    #[test]
    fn q_paper_operating_point() {
        let m = q_from_visibility(0.0019).unwrap();
        assert_abs_diff_eq!(m.q, 0.992407, epsilon = 5e-6);
        // the minimum sits at phi_mid = pi, phi_end = 0 (mod 2pi)
        let mid_dist = (m.phi_mid - PI).abs();
        let end_dist = m.phi_end.min(TAU - m.phi_end);
        assert!(mid_dist < 1e-3, "phi_mid = {}", m.phi_mid);
        assert!(end_dist < 1e-3, "phi_end = {}", m.phi_end);
    }

    #[test]
    fn q_monotone_in_visibility() {
        let mut prev = 2.0;
        for v in [0.001, 0.01, 0.1, 0.3, 0.5, 0.8] {
            let q = q_from_visibility(v).unwrap().q;
            assert!(q <= prev + 1e-12, "q({v}) = {q} > {prev}");
            prev = q;
        }
    }

    #[test]
    fn q_regression_mid_visibility() {
        // frozen from the grid minimiser; guards the objective construction
        let q = q_from_visibility(0.5).unwrap().q;
        assert!(q > 0.0 && q < 0.3, "q = {q}");
        let again = q_from_visibility(0.5).unwrap().q;
        assert_eq!(q, again);
    }

    #[test]
    fn translation_invariance() {
        for origin in [0.0, 1.0, PI] {
            let m = q_from_sigma_with_origin(3.54003, origin).unwrap();
            assert_abs_diff_eq!(m.q, 0.992407, epsilon = 5e-6);
        }
    }

    #[test]
    fn convolution_identity() {
        // f_WG(.; 0, sigma) * f_WG = f_WG(.; 0, sqrt2 sigma), the key step of
        // the conditional-density derivation; periodic trapezoid quadrature
        for sigma in [0.5, 1.0, 3.54003] {
            let n = 4000;
            let h = TAU / n as f64;
            for s in 0..100 {
                let x = s as f64 * TAU / 100.0;
                let mut conv = 0.0;
                for i in 0..n {
                    let t = i as f64 * h;
                    conv += wrapped_gaussian_pdf(t, 0.0, sigma).unwrap()
                        * wrapped_gaussian_pdf(x, t, sigma).unwrap()
                        * h;
                }
                let direct = wrapped_gaussian_pdf(x, 0.0, sigma * 2.0f64.sqrt()).unwrap();
                assert_abs_diff_eq!(conv, direct, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn paper_stationary_point_matches_grid_minimum() {
        let sigma = 3.54003;
        let m = q_from_sigma(sigma).unwrap();
        let sigma2 = sigma * 2.0f64.sqrt();
        let stationary = wrapped_gaussian_pdf(PI, 0.0, sigma).unwrap()
            * wrapped_gaussian_pdf(0.0, PI, sigma).unwrap()
            / wrapped_gaussian_pdf(0.0, 0.0, sigma2).unwrap();
        assert_abs_diff_eq!(TAU * stationary, m.q, epsilon = 1e-9);
    }
}
