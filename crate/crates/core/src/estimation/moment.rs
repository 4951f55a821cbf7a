//! Conversion of the fitted shift-versus-gradient slope into the atomic
//! quadrupole moment, with the statistical error propagated from the fit and
//! the systematic error from the field-alignment uncertainty.
//!
//! For the two standard entangled states averaged over both orderings, the
//! aligned-field oscillation frequency grows as
//!     f [Hz] = (12/5) * Theta_SI * g / h,
//! with g the applied gradient at either ion site in V/m^2, so a slope quoted
//! in the laboratory unit Hz mm^2/V inverts to
//!     Theta_SI = (5/12) h * slope * 1e-6.

use serde::Serialize;

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};

/// Quadrupole moment extracted from a gradient-scan slope.
#[derive(Debug, Clone, Serialize)]
pub struct MomentResult {
    /// Quadrupole moment in atomic units (e a0^2).
    pub theta_ea02: f64,
    /// Statistical 1-sigma from the slope uncertainty, in e a0^2.
    pub stat_sigma: f64,
    /// Systematic 1-sigma from the alignment uncertainty, in e a0^2.
    pub syst_sigma: f64,
    /// Input slope, Hz mm^2/V.
    pub slope_hz_mm2_per_v: f64,
    /// Input slope uncertainty, Hz mm^2/V.
    pub slope_sigma: f64,
    /// Input alignment uncertainty, radians.
    pub delta_beta: f64,
}

impl MomentResult {
    /// Quadrature sum of the statistical and systematic errors, in e a0^2.
    pub fn total_sigma(&self) -> f64 {
        self.stat_sigma.hypot(self.syst_sigma)
    }
}

/// Slope sensitivity in (e a0^2) per (Hz mm^2/V).
fn moment_per_unit_slope(constants: &PhysicalConstants) -> f64 {
    (5.0 / 12.0) * constants.planck * 1e-6 / constants.atomic_quadrupole_unit()
}

/// Convert a fitted slope (Hz mm^2/V) and the alignment uncertainty
/// `delta_beta` (radians) to the quadrupole moment.
///
/// A tilt of the quantization axis by db rescales the angular factor
/// 3 cos^2(db) - 1 away from its aligned value 2, biasing the slope by the
/// relative amount (3/2) sin^2(db); that bound is quoted as the systematic.
pub fn extract_moment(
    slope_hz_mm2_per_v: f64,
    slope_sigma: f64,
    delta_beta: f64,
    constants: &PhysicalConstants,
) -> Result<MomentResult> {
    constants.validate()?;
    if !slope_hz_mm2_per_v.is_finite() || !slope_sigma.is_finite() || slope_sigma < 0.0 {
        return Err(Error::FitInput(
            "moment extraction needs a finite slope with nonnegative uncertainty".into(),
        ));
    }
    if !delta_beta.is_finite() || delta_beta.abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(Error::FitInput(
            "alignment uncertainty must be a small angle below 90 degrees".into(),
        ));
    }
    let scale = moment_per_unit_slope(constants);
    let theta_ea02 = scale * slope_hz_mm2_per_v;
    let stat_sigma = scale * slope_sigma;
    let syst_sigma = 1.5 * delta_beta.sin().powi(2) * theta_ea02.abs();
    Ok(MomentResult {
        theta_ea02,
        stat_sigma,
        syst_sigma,
        slope_hz_mm2_per_v,
        slope_sigma,
        delta_beta,
    })
}

/// Inverse of [`extract_moment`]'s central value: the aligned-field slope
/// (Hz mm^2/V) produced by a moment given in e a0^2. Used to cross-check
/// recovered moments against simulation truth.
pub fn slope_for_moment(theta_ea02: f64, constants: &PhysicalConstants) -> f64 {
    theta_ea02 / moment_per_unit_slope(constants)
}

/// Split a fitted zero-gradient intercept (Hz) into the second-order Zeeman
/// part `c2 * B0^2` and the remainder attributable to stray static gradients.
/// `bias_field` is in tesla and `second_order_coeff` in Hz/T^2.
pub fn decompose_offset(offset_hz: f64, bias_field: f64, second_order_coeff: f64) -> (f64, f64) {
    let quadratic = second_order_coeff * bias_field * bias_field;
    (quadratic, offset_hz - quadratic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn reference_slope_gives_reference_moment() {
        let c = PhysicalConstants::codata();
        let m = extract_moment(2.975, 0.002, 3.0_f64.to_radians(), &c).unwrap();
        assert_abs_diff_eq!(m.theta_ea02, 1.83071, epsilon = 5e-5);
        assert_abs_diff_eq!(m.stat_sigma, 0.00123, epsilon = 5e-5);
        assert_abs_diff_eq!(m.syst_sigma, 0.00752, epsilon = 5e-5);
        // Quadrature total lands just under 0.008 and rounds to 0.01.
        assert_abs_diff_eq!(m.total_sigma(), 0.00762, epsilon = 1e-4);
        assert_eq!((m.total_sigma() * 100.0).round() / 100.0, 0.01);
    }

    #[test]
    fn slope_round_trip_is_identity() {
        let c = PhysicalConstants::codata();
        for &theta in &[0.3, 1.0, 1.83, 2.5] {
            let slope = slope_for_moment(theta, &c);
            let back = extract_moment(slope, 0.0, 0.0, &c).unwrap();
            assert_relative_eq!(back.theta_ea02, theta, max_relative = 1e-12);
        }
    }

    #[test]
    fn perfect_alignment_zeroes_the_systematic() {
        let c = PhysicalConstants::codata();
        let m = extract_moment(2.975, 0.002, 0.0, &c).unwrap();
        assert_eq!(m.syst_sigma, 0.0);
        assert_relative_eq!(m.total_sigma(), m.stat_sigma, max_relative = 1e-12);
    }

    #[test]
    fn statistical_error_scales_with_slope_error() {
        let c = PhysicalConstants::codata();
        let a = extract_moment(2.975, 0.002, 0.0, &c).unwrap();
        let b = extract_moment(2.975, 0.004, 0.0, &c).unwrap();
        assert_relative_eq!(b.stat_sigma, 2.0 * a.stat_sigma, max_relative = 1e-12);
    }

    #[test]
    fn slope_sign_carries_through() {
        let c = PhysicalConstants::codata();
        let m = extract_moment(-2.975, 0.002, 0.1, &c).unwrap();
        assert!(m.theta_ea02 < 0.0);
        assert!(m.syst_sigma > 0.0);
    }

    #[test]
    fn invalid_inputs_rejected() {
        let c = PhysicalConstants::codata();
        assert!(extract_moment(f64::NAN, 0.1, 0.0, &c).is_err());
        assert!(extract_moment(2.9, -0.1, 0.0, &c).is_err());
        assert!(extract_moment(2.9, 0.1, 1.6, &c).is_err());
    }

    #[test]
    fn intercept_decomposition_reproduces_budget() {
        // -2.4 Hz total at 2.9 G with c2 = -3.43e7 Hz/T^2 splits into the
        // quadratic Zeeman part near -2.9 Hz and a +0.5 Hz stray remainder.
        let (quadratic, remainder) = decompose_offset(-2.4, 2.9e-4, -3.43e7);
        assert_abs_diff_eq!(quadratic, -2.88463, epsilon = 1e-4);
        assert_abs_diff_eq!(remainder, 0.48463, epsilon = 1e-4);
        assert_abs_diff_eq!(quadratic + remainder, -2.4, epsilon = 1e-12);
    }

    #[test]
    fn zero_field_decomposition_is_trivial() {
        let (quadratic, remainder) = decompose_offset(1.5, 0.0, -3.43e7);
        assert_eq!(quadratic, 0.0);
        assert_eq!(remainder, 1.5);
    }
}
