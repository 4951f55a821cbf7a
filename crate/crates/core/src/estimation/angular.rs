//! Fit of the shift-versus-tilt curve
//!     delta(beta) = offset + amplitude * cos^2(beta - beta0),
//! used to locate the field axis and check the angular dependence of the
//! quadrupole shift. A coarse grid over beta0 (with the two linear parameters
//! solved in closed form) feeds a three-parameter refinement, so the fit
//! cannot be trapped by the 90-degree-periodic ambiguity.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::{levenberg_marquardt, parameter_covariance, LmSettings};

/// Fitted angular model. Parameter order in `covariance` is
/// (offset, amplitude, beta0).
#[derive(Debug, Clone, Serialize)]
pub struct AngularFit {
    /// Shift at beta - beta0 = 90 degrees (rad/s if the input is rad/s).
    pub offset: f64,
    /// Peak-to-valley modulation, canonicalized to >= 0.
    pub amplitude: f64,
    /// Symmetry axis, radians, reduced to [0, pi).
    pub beta0: f64,
    /// Parameter covariance; NaN-filled when the axis is unresolved.
    pub covariance: [[f64; 3]; 3],
    pub chi_squared: f64,
    pub dof: usize,
    pub converged: bool,
    /// Set when the modulation is consistent with zero, leaving beta0
    /// unconstrained.
    pub axis_degenerate: bool,
}

impl AngularFit {
    /// 1-sigma uncertainty of the amplitude.
    pub fn amplitude_sigma(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }

    /// 1-sigma uncertainty of the axis, radians.
    pub fn beta0_sigma(&self) -> f64 {
        self.covariance[2][2].sqrt()
    }
}

fn model(p: &[f64; 3], beta: f64) -> f64 {
    let [offset, amplitude, beta0] = *p;
    let c = (beta - beta0).cos();
    offset + amplitude * c * c
}

fn jacobian(p: &[f64; 3], beta: f64) -> [f64; 3] {
    let [_, amplitude, beta0] = *p;
    let c = (beta - beta0).cos();
    [1.0, c * c, amplitude * (2.0 * (beta - beta0)).sin()]
}

/// Closed-form weighted solve of y = offset + amplitude * cos^2(beta - beta0)
/// at fixed beta0. Returns (offset, amplitude, chi2).
fn linear_subfit(data: &[(f64, f64, f64)], beta0: f64) -> Option<(f64, f64, f64)> {
    let mut sw = 0.0;
    let mut su = 0.0;
    let mut sy = 0.0;
    let mut suu = 0.0;
    let mut suy = 0.0;
    for &(beta, y, w) in data {
        let c = (beta - beta0).cos();
        let u = c * c;
        sw += w;
        su += w * u;
        sy += w * y;
        suu += w * u * u;
        suy += w * u * y;
    }
    let det = sw * suu - su * su;
    if det <= 1e-12 * sw * suu {
        return None;
    }
    let offset = (suu * sy - su * suy) / det;
    let amplitude = (sw * suy - su * sy) / det;
    let chi2 = data
        .iter()
        .map(|&(beta, y, w)| {
            let c = (beta - beta0).cos();
            let r = y - offset - amplitude * c * c;
            w * r * r
        })
        .sum();
    Some((offset, amplitude, chi2))
}

/// Fit the angular model to (beta, shift, sigma) triples (beta in radians).
/// Needs at least four points spanning at least 90 degrees so the axis and
/// the modulation cannot trade against each other.
pub fn fit_angular(points: &[(f64, f64, f64)]) -> Result<AngularFit> {
    if points.len() < 4 {
        return Err(Error::FitInput(format!(
            "angular fit needs at least 4 points, got {}",
            points.len()
        )));
    }
    for &(b, y, s) in points {
        if !b.is_finite() || !y.is_finite() || !s.is_finite() || s <= 0.0 {
            return Err(Error::FitInput(
                "angular fit needs finite points with positive error bars".into(),
            ));
        }
    }
    let b_min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let b_max = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if b_max - b_min < PI / 2.0 - 1e-9 {
        return Err(Error::FitInput(format!(
            "angular schedule spans {:.1} degrees; at least 90 are needed",
            (b_max - b_min).to_degrees()
        )));
    }

    let data: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|&(b, y, s)| (b, y, 1.0 / (s * s)))
        .collect();

    // One-degree grid over the half-turn of distinct axes.
    let mut best: Option<(f64, f64, f64, f64)> = None; // (chi2, beta0, offset, amplitude)
    for k in 0..180 {
        let beta0 = k as f64 * PI / 180.0;
        if let Some((offset, amplitude, chi2)) = linear_subfit(&data, beta0) {
            if best.as_ref().is_none_or(|(bc, _, _, _)| chi2 < *bc) {
                best = Some((chi2, beta0, offset, amplitude));
            }
        }
    }
    let Some((_, beta0_init, offset_init, amplitude_init)) = best else {
        return Err(Error::FitInput(
            "angular grid search found no usable axis".into(),
        ));
    };

    let outcome = levenberg_marquardt(
        &data,
        [offset_init, amplitude_init, beta0_init],
        &model,
        &jacobian,
        &|_| {},
        &LmSettings {
            max_iterations: 200,
            cost_tolerance: 1e-12,
            step_tolerance: 1e-13,
        },
    );

    let [mut offset, mut amplitude, mut beta0] = outcome.params;
    // Canonical branch: cos^2 is pi-periodic in beta0 and a negative
    // amplitude is the same curve with the axis rotated a quarter turn.
    if amplitude < 0.0 {
        offset += amplitude;
        amplitude = -amplitude;
        beta0 += PI / 2.0;
    }
    beta0 = beta0.rem_euclid(PI);
    let canonical = [offset, amplitude, beta0];

    let cov = parameter_covariance(&data, &canonical, &jacobian);
    let scale = points
        .iter()
        .map(|p| p.1.abs())
        .fold(f64::NEG_INFINITY, f64::max);
    let axis_degenerate = cov.is_none() || amplitude <= 1e-9 * scale.max(1e-300);

    Ok(AngularFit {
        offset,
        amplitude,
        beta0,
        covariance: cov.unwrap_or([[f64::NAN; 3]; 3]),
        chi_squared: outcome.chi2,
        dof: points.len() - 3,
        converged: outcome.converged,
        axis_degenerate,
    })
}
