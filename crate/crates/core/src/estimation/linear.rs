//! Closed-form weighted straight-line fit, plus a log-log wrapper for
//! power-law exponents.

use serde::Serialize;

use crate::error::{Error, Result};

/// Weighted least-squares line y = intercept + slope * x. Parameter order in
/// `covariance` is (intercept, slope).
#[derive(Debug, Clone, Serialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    /// Parameter covariance from the quoted error bars (not rescaled by
    /// chi-square).
    pub covariance: [[f64; 2]; 2],
    pub chi_squared: f64,
    pub dof: usize,
}

impl LinearFit {
    /// 1-sigma uncertainty of the intercept.
    pub fn intercept_sigma(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }

    /// 1-sigma uncertainty of the slope.
    pub fn slope_sigma(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }
}

/// Fit a straight line to (x, y, sigma) triples with sigma > 0.
pub fn fit_linear_weighted(points: &[(f64, f64, f64)]) -> Result<LinearFit> {
    if points.len() < 2 {
        return Err(Error::FitInput(format!(
            "line fit needs at least 2 points, got {}",
            points.len()
        )));
    }
    for &(x, y, s) in points {
        if !x.is_finite() || !y.is_finite() || !s.is_finite() || s <= 0.0 {
            return Err(Error::FitInput(
                "line fit needs finite points with positive error bars".into(),
            ));
        }
    }

    let mut sw = 0.0;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y, s) in points {
        let w = 1.0 / (s * s);
        sw += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    let det = sw * sxx - sx * sx;
    if det <= 1e-12 * sw * sxx {
        return Err(Error::FitInput(
            "abscissae are degenerate; cannot resolve a slope".into(),
        ));
    }
    let intercept = (sxx * sy - sx * sxy) / det;
    let slope = (sw * sxy - sx * sy) / det;
    let covariance = [[sxx / det, -sx / det], [-sx / det, sw / det]];
    let chi_squared = points
        .iter()
        .map(|&(x, y, s)| {
            let r = (y - intercept - slope * x) / s;
            r * r
        })
        .sum();

    Ok(LinearFit {
        intercept,
        slope,
        covariance,
        chi_squared,
        dof: points.len() - 2,
    })
}

/// Fit y = const * x^exponent via a weighted line in log-log space; the
/// returned slope is the exponent. Requires strictly positive x and y;
/// log-space error bars are sigma/y.
pub fn fit_power_law(points: &[(f64, f64, f64)]) -> Result<LinearFit> {
    let logged: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|&(x, y, s)| {
            if x <= 0.0 || y <= 0.0 {
                return Err(Error::FitInput(
                    "power-law fit needs strictly positive coordinates".into(),
                ));
            }
            Ok((x.ln(), y.ln(), s / y))
        })
        .collect::<Result<_>>()?;
    fit_linear_weighted(&logged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_line_recovered() {
        let pts: Vec<(f64, f64, f64)> = (0..7)
            .map(|i| {
                let x = i as f64 * 2.0;
                (x, -0.5 + 2.975 * x, 0.1)
            })
            .collect();
        let fit = fit_linear_weighted(&pts).unwrap();
        assert_relative_eq!(fit.slope, 2.975, max_relative = 1e-12);
        assert_abs_diff_eq!(fit.intercept, -0.5, epsilon = 1e-12);
        assert!(fit.chi_squared < 1e-20);
        assert_eq!(fit.dof, 5);
    }

    #[test]
    fn covariance_matches_two_point_propagation() {
        // Two points: slope = (y2 - y1)/(x2 - x1), so
        // var(slope) = (s1^2 + s2^2)/(x2 - x1)^2 exactly.
        let pts = [(1.0, 0.3, 0.2), (3.0, 1.1, 0.5)];
        let fit = fit_linear_weighted(&pts).unwrap();
        let expected = (0.2_f64.powi(2) + 0.5_f64.powi(2)) / 4.0;
        assert_relative_eq!(fit.covariance[1][1], expected, max_relative = 1e-12);
        assert_eq!(fit.dof, 0);
    }

    #[test]
    fn degenerate_abscissae_rejected() {
        let pts = [(2.0, 0.1, 0.1), (2.0, 0.4, 0.1), (2.0, 0.2, 0.1)];
        assert!(fit_linear_weighted(&pts).is_err());
        assert!(fit_linear_weighted(&[(1.0, 0.0, 0.1)]).is_err());
        assert!(fit_linear_weighted(&[(1.0, 0.0, 0.0), (2.0, 1.0, 0.1)]).is_err());
    }

    #[test]
    fn pulls_are_standard_normal_over_replicates() {
        // 500 synthetic calibrations: the slope pull (fit - truth)/sigma must
        // average to ~0 with unit spread, confirming the covariance is neither
        // optimistic nor inflated.
        let truth = (1.3, -0.7);
        let xs = [0.0, 1.0, 2.0, 4.0, 7.0, 10.0];
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut pulls = Vec::with_capacity(500);
        for _ in 0..500 {
            let pts: Vec<(f64, f64, f64)> = xs
                .iter()
                .map(|&x| {
                    let noise: f64 = (0..12).map(|_| rng.random::<f64>()).sum::<f64>() - 6.0;
                    (x, truth.0 + truth.1 * x + 0.3 * noise, 0.3)
                })
                .collect();
            let fit = fit_linear_weighted(&pts).unwrap();
            pulls.push((fit.slope - truth.1) / fit.slope_sigma());
        }
        let mean = pulls.iter().sum::<f64>() / pulls.len() as f64;
        let var =
            pulls.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / (pulls.len() - 1) as f64;
        assert!(mean.abs() < 0.15, "pull mean {mean}");
        assert!((0.8..1.2).contains(&var.sqrt()), "pull std {}", var.sqrt());
    }

    #[test]
    fn power_law_recovers_exponent() {
        let pts: Vec<(f64, f64, f64)> = [0.5e6, 1.0e6, 2.0e6, 4.0e6]
            .iter()
            .map(|&x: &f64| (x, 3.0e3 * x.powf(-1.0 / 3.0), 1e-6))
            .collect();
        let fit = fit_power_law(&pts).unwrap();
        assert_relative_eq!(fit.slope, -1.0 / 3.0, max_relative = 1e-9);
    }

    #[test]
    fn power_law_rejects_nonpositive_input() {
        assert!(fit_power_law(&[(1.0, -2.0, 0.1), (2.0, 3.0, 0.1)]).is_err());
        assert!(fit_power_law(&[(0.0, 2.0, 0.1), (2.0, 3.0, 0.1)]).is_err());
    }

    proptest! {
        // Scaling all error bars by k scales the covariance by k^2 and leaves
        // the central values untouched.
        #[test]
        fn error_bar_scaling(k in 0.1_f64..10.0) {
            let pts = [(0.0, 0.2, 0.1), (1.0, 1.3, 0.2), (2.0, 2.1, 0.15), (3.5, 3.9, 0.3)];
            let scaled: Vec<(f64, f64, f64)> =
                pts.iter().map(|&(x, y, s)| (x, y, k * s)).collect();
            let base = fit_linear_weighted(&pts).unwrap();
            let big = fit_linear_weighted(&scaled).unwrap();
            prop_assert!((base.slope - big.slope).abs() < 1e-9 * base.slope.abs());
            prop_assert!((base.intercept - big.intercept).abs() < 1e-9);
            for a in 0..2 {
                for b in 0..2 {
                    let want = k * k * base.covariance[a][b];
                    prop_assert!((big.covariance[a][b] - want).abs() <= 1e-9 * want.abs() + 1e-30);
                }
            }
        }
    }
}
