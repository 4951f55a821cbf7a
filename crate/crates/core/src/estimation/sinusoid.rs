//! Weighted fit of parity scans to a damped sinusoid with baseline,
//!     p(tau) = C exp(-tau/tau_d) cos(2 pi f tau + phi) + b,
//! initialized from a weighted periodogram so the nonlinear refinement starts
//! inside the correct frequency basin.

use std::f64::consts::PI;

use serde::Serialize;

use crate::dataset::ParityRecord;
use crate::error::{Error, Result};
use crate::estimation::{levenberg_marquardt, parameter_covariance, LmSettings};

const TWO_PI: f64 = 2.0 * PI;

/// Knobs for [`fit_damped_sinusoid`]. The defaults are correct for parity
/// scans; only the frequency window normally needs touching.
#[derive(Debug, Clone, Serialize)]
pub struct FitConfig {
    /// Lower edge of the frequency search window, Hz.
    pub freq_min: f64,
    /// Upper edge of the frequency search window, Hz. `None` uses the Nyquist
    /// frequency of the densest sample spacing.
    pub freq_max: Option<f64>,
    /// Maximum refinement iterations.
    pub max_iterations: usize,
    /// Relative chi-square decrease below which the fit is converged.
    pub cost_tolerance: f64,
    /// Step norm below which the fit is converged.
    pub step_tolerance: f64,
    /// Box for the damping time, seconds.
    pub damping_bounds: (f64, f64),
    /// Upper bound for the contrast (parity amplitude cannot exceed 1; the
    /// headroom leaves slack for noise).
    pub contrast_limit: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            freq_min: 0.0,
            freq_max: None,
            max_iterations: 200,
            cost_tolerance: 1e-10,
            step_tolerance: 1e-12,
            damping_bounds: (0.010, 100.0),
            contrast_limit: 1.2,
        }
    }
}

/// Fitted damped sinusoid. Parameter order in `covariance` is
/// (contrast, frequency, phase, damping_time, baseline).
#[derive(Debug, Clone, Serialize)]
pub struct DampedSinusoidFit {
    /// Contrast C, dimensionless, >= 0.
    pub contrast: f64,
    /// Oscillation frequency, Hz, >= 0.
    pub frequency: f64,
    /// Phase at tau = 0, radians, in (-pi, pi].
    pub phase: f64,
    /// Exponential damping time of the contrast, seconds.
    pub damping_time: f64,
    /// Constant parity offset.
    pub baseline: f64,
    /// Parameter covariance (J^T W J)^{-1}; NaN-filled when degenerate.
    pub covariance: [[f64; 5]; 5],
    /// Weighted chi-square at the solution.
    pub chi_squared: f64,
    /// Degrees of freedom (points minus five).
    pub dof: usize,
    /// Whether the refinement met its tolerances.
    pub converged: bool,
    /// Set when the data carry no usable oscillation (flat scan or singular
    /// covariance); the frequency is meaningless in that case.
    pub degenerate: bool,
    /// Refinement iterations spent.
    pub iterations: usize,
}

impl DampedSinusoidFit {
    /// 1-sigma statistical uncertainty of the frequency, Hz.
    pub fn frequency_sigma(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }

    /// 1-sigma statistical uncertainty of the contrast.
    pub fn contrast_sigma(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }
}

fn model(p: &[f64; 5], tau: f64) -> f64 {
    let [c, f, phi, tau_d, b] = *p;
    c * (-tau / tau_d).exp() * (TWO_PI * f * tau + phi).cos() + b
}

fn jacobian(p: &[f64; 5], tau: f64) -> [f64; 5] {
    let [c, f, phi, tau_d, _] = *p;
    let envelope = (-tau / tau_d).exp();
    let (sin, cos) = (TWO_PI * f * tau + phi).sin_cos();
    [
        envelope * cos,
        -c * envelope * sin * TWO_PI * tau,
        -c * envelope * sin,
        c * envelope * cos * tau / (tau_d * tau_d),
        1.0,
    ]
}

/// Closed-form weighted solve of y = E(t)(A cos(2 pi f t) + B sin(2 pi f t)) + c
/// at fixed frequency and envelope time (pass infinity for no envelope).
/// Returns (A, B, c, chi2).
fn linear_subfit(data: &[(f64, f64, f64)], freq: f64, tau_d: f64) -> Option<(f64, f64, f64, f64)> {
    let mut m = [[0.0_f64; 3]; 3];
    let mut v = [0.0_f64; 3];
    let value = |t: f64, sol: &[f64; 3]| {
        let e = (-t / tau_d).exp();
        let (s, c) = (TWO_PI * freq * t).sin_cos();
        e * (sol[0] * c + sol[1] * s) + sol[2]
    };
    for &(t, y, w) in data {
        let e = (-t / tau_d).exp();
        let (s, c) = (TWO_PI * freq * t).sin_cos();
        let u = [e * c, e * s, 1.0];
        for a in 0..3 {
            v[a] += w * u[a] * y;
            for b in 0..3 {
                m[a][b] += w * u[a] * u[b];
            }
        }
    }
    let sol = solve3(&m, &v)?;
    let chi2 = data
        .iter()
        .map(|&(t, y, w)| {
            let r = y - value(t, &sol);
            w * r * r
        })
        .sum();
    Some((sol[0], sol[1], sol[2], chi2))
}

fn solve3(m: &[[f64; 3]; 3], v: &[f64; 3]) -> Option<[f64; 3]> {
    let a = nalgebra::Matrix3::from_fn(|r, c| m[r][c]);
    let b = nalgebra::Vector3::from_column_slice(v);
    let x = a.lu().solve(&b)?;
    let out = [x[0], x[1], x[2]];
    if out.iter().any(|q| !q.is_finite()) {
        return None;
    }
    Some(out)
}

/// Grid frequencies for the periodogram: fine enough (eight points per
/// resolution element 1/span) that the global minimum cannot be stepped over.
fn frequency_grid(config: &FitConfig, taus: &[f64], span: f64) -> Vec<f64> {
    let mut sorted = taus.to_vec();
    sorted.sort_by(f64::total_cmp);
    let min_gap = sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&g| g > 0.0)
        .fold(f64::INFINITY, f64::min);
    let nyquist = if min_gap.is_finite() {
        0.5 / min_gap
    } else {
        taus.len() as f64 / (2.0 * span)
    };
    let fmax = config
        .freq_max
        .unwrap_or(nyquist)
        .min(nyquist.max(2.0 / span));
    let step = 1.0 / (8.0 * span);
    let fmin = config.freq_min.max(step); // the c term already covers f = 0
    let count = (((fmax - fmin) / step).ceil() as usize).clamp(8, 200_000);
    (0..=count).map(|i| fmin + i as f64 * step).collect()
}

/// Crude damping-time estimate from a log-linear fit of |y - baseline|
/// against time, restricted to points well clear of the noise floor.
fn initial_damping(data: &[(f64, f64, f64)], baseline: f64, span: f64, bounds: (f64, f64)) -> f64 {
    let peak = data
        .iter()
        .map(|&(_, y, _)| (y - baseline).abs())
        .fold(0.0_f64, f64::max);
    if peak <= 0.0 {
        return span.clamp(bounds.0, bounds.1);
    }
    let mut st = 0.0;
    let mut sl = 0.0;
    let mut stt = 0.0;
    let mut stl = 0.0;
    let mut n = 0.0;
    for &(t, y, _) in data {
        let e = (y - baseline).abs();
        if e > 0.2 * peak {
            let l = e.ln();
            st += t;
            sl += l;
            stt += t * t;
            stl += t * l;
            n += 1.0;
        }
    }
    let det = n * stt - st * st;
    if det.abs() < 1e-300 {
        return span.clamp(bounds.0, bounds.1);
    }
    let slope = (n * stl - st * sl) / det;
    let guess = if slope < -1e-9 { -1.0 / slope } else { span };
    guess.clamp(bounds.0, bounds.1)
}

/// Fit a damped sinusoid to a parity scan.
///
/// Requires at least six points (five parameters plus one degree of freedom)
/// and a nonzero time span. Zero error bars are floored to the smallest
/// positive error bar in the scan, so exact-expectation datasets (which quote
/// sigma = 0 at parity +-1) remain fittable; an all-zero scan is rejected.
/// Flat scans return `degenerate = true` instead of an arbitrary frequency;
/// otherwise a fitted frequency below one cycle per span is rejected as
/// unresolvable.
pub fn fit_damped_sinusoid(
    records: &[ParityRecord],
    config: &FitConfig,
) -> Result<DampedSinusoidFit> {
    if records.len() < 6 {
        return Err(Error::FitInput(format!(
            "damped-sinusoid fit needs at least 6 points, got {}",
            records.len()
        )));
    }
    for r in records {
        if !r.tau.is_finite() || !r.parity.is_finite() || !r.sigma.is_finite() || r.sigma < 0.0 {
            return Err(Error::FitInput(
                "non-finite sample or negative error bar".into(),
            ));
        }
    }
    let tau_min = records.iter().map(|r| r.tau).fold(f64::INFINITY, f64::min);
    let tau_max = records
        .iter()
        .map(|r| r.tau)
        .fold(f64::NEG_INFINITY, f64::max);
    let span = tau_max - tau_min;
    if !span.is_finite() || span <= 0.0 {
        return Err(Error::FitInput("all wait times coincide".into()));
    }
    let floor = records
        .iter()
        .map(|r| r.sigma)
        .filter(|&s| s > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !floor.is_finite() {
        return Err(Error::FitInput("all error bars are zero".into()));
    }

    let data: Vec<(f64, f64, f64)> = records
        .iter()
        .map(|r| {
            let s = r.sigma.max(floor);
            (r.tau, r.parity, 1.0 / (s * s))
        })
        .collect();
    let taus: Vec<f64> = records.iter().map(|r| r.tau).collect();

    // Periodogram: pick the frequency whose linear subfit minimizes chi2.
    let mut best: Option<(f64, f64, (f64, f64, f64))> = None; // (chi2, f, (A, B, c))
    for &f in &frequency_grid(config, &taus, span) {
        if let Some((a, b, c, chi2)) = linear_subfit(&data, f, f64::INFINITY) {
            if best.as_ref().is_none_or(|(bc, _, _)| chi2 < *bc) {
                best = Some((chi2, f, (a, b, c)));
            }
        }
    }
    let Some((_, mut f0, (mut a0, mut b0, mut c0))) = best else {
        return Err(Error::FitInput(
            "periodogram found no usable frequency".into(),
        ));
    };
    let damping0 = initial_damping(&data, c0, span, config.damping_bounds);

    // Refine around the coarse peak with the envelope folded in: on gapped
    // schedules the flat-envelope scan can score a neighboring sidelobe best,
    // which would start the solver in the wrong local basin. One coarse cell
    // at 16x resolution brings the start within the global one.
    let step = 1.0 / (8.0 * span);
    let mut best_chi = f64::INFINITY;
    for k in -16..=16_i32 {
        let f = f0 + f64::from(k) * step / 16.0;
        if f < config.freq_min || config.freq_max.is_some_and(|m| f > m) {
            continue;
        }
        if let Some((a, b, c, chi2)) = linear_subfit(&data, f, damping0) {
            if chi2 < best_chi {
                best_chi = chi2;
                (f0, a0, b0, c0) = (f, a, b, c);
            }
        }
    }

    let contrast0 = a0.hypot(b0).min(config.contrast_limit);
    let phase0 = (-b0).atan2(a0);

    let bounds = config.damping_bounds;
    let limit = config.contrast_limit;
    let clamp = move |p: &mut [f64; 5]| {
        p[0] = p[0].clamp(0.0, limit);
        p[3] = p[3].clamp(bounds.0, bounds.1);
    };

    let outcome = levenberg_marquardt(
        &data,
        [contrast0, f0, phase0, damping0, c0],
        &model,
        &jacobian,
        &clamp,
        &LmSettings {
            max_iterations: config.max_iterations,
            cost_tolerance: config.cost_tolerance,
            step_tolerance: config.step_tolerance,
        },
    );

    let [contrast, mut frequency, mut phase, damping_time, baseline] = outcome.params;
    // Canonical branch: nonnegative frequency, phase in (-pi, pi].
    if frequency < 0.0 {
        frequency = -frequency;
        phase = -phase;
    }
    phase = phase.rem_euclid(TWO_PI);
    if phase > PI {
        phase -= TWO_PI;
    }
    let canonical = [contrast, frequency, phase, damping_time, baseline];

    let cov = parameter_covariance(&data, &canonical, &jacobian);
    let degenerate = contrast < 1e-9 || cov.is_none();
    if !degenerate && frequency * span < 1.0 {
        return Err(Error::FitInput(format!(
            "fitted frequency {frequency:.3e} Hz completes under one cycle over \
             the {span:.3e} s scan; extend the scan or the search window"
        )));
    }

    Ok(DampedSinusoidFit {
        contrast,
        frequency,
        phase,
        damping_time,
        baseline,
        covariance: cov.unwrap_or([[f64::NAN; 5]; 5]),
        chi_squared: outcome.chi2,
        dof: records.len() - 5,
        converged: outcome.converged,
        degenerate,
        iterations: outcome.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synthetic(
        c: f64,
        f: f64,
        phi: f64,
        tau_d: f64,
        b: f64,
        taus: &[f64],
        sigma: f64,
    ) -> Vec<ParityRecord> {
        taus.iter()
            .map(|&tau| ParityRecord {
                tau,
                parity: model(&[c, f, phi, tau_d, b], tau),
                sigma,
                shots: 100,
            })
            .collect()
    }

    fn grid(n: usize, stop: f64) -> Vec<f64> {
        (0..n).map(|i| stop * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let p = [0.83, 31.7, 0.4, 0.9, 0.03];
        for &tau in &[0.0, 0.013, 0.11, 0.47] {
            let analytic = jacobian(&p, tau);
            for k in 0..5 {
                let h = 1e-6 * p[k].abs().max(1e-3);
                let mut hi = p;
                let mut lo = p;
                hi[k] += h;
                lo[k] -= h;
                let numeric = (model(&hi, tau) - model(&lo, tau)) / (2.0 * h);
                assert_relative_eq!(analytic[k], numeric, max_relative = 1e-5, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn noiseless_scan_recovers_parameters() {
        let truth = (0.9, 33.35, 0.0, 0.584, 0.0);
        let records = synthetic(
            truth.0,
            truth.1,
            truth.2,
            truth.3,
            truth.4,
            &grid(61, 0.3),
            0.05,
        );
        let fit = fit_damped_sinusoid(&records, &FitConfig::default()).unwrap();
        assert!(fit.converged && !fit.degenerate);
        assert_relative_eq!(fit.contrast, truth.0, max_relative = 1e-8);
        assert_relative_eq!(fit.frequency, truth.1, max_relative = 1e-8);
        assert_abs_diff_eq!(fit.phase, truth.2, epsilon = 1e-7);
        assert_relative_eq!(fit.damping_time, truth.3, max_relative = 1e-6);
        assert_abs_diff_eq!(fit.baseline, truth.4, epsilon = 1e-9);
        assert!(fit.chi_squared < 1e-15);
        assert_eq!(fit.dof, 56);
    }

    #[test]
    fn nonzero_phase_and_baseline_recovered() {
        let records = synthetic(0.7, 12.0, -2.1, 1.5, 0.08, &grid(80, 0.5), 0.02);
        let fit = fit_damped_sinusoid(&records, &FitConfig::default()).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.frequency, 12.0, max_relative = 1e-7);
        assert_abs_diff_eq!(fit.phase, -2.1, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.baseline, 0.08, epsilon = 1e-8);
    }

    #[test]
    fn flat_scan_is_flagged_degenerate() {
        let records: Vec<ParityRecord> = grid(20, 0.2)
            .into_iter()
            .map(|tau| ParityRecord {
                tau,
                parity: 0.25,
                sigma: 0.05,
                shots: 100,
            })
            .collect();
        let fit = fit_damped_sinusoid(&records, &FitConfig::default()).unwrap();
        assert!(fit.degenerate);
    }

    #[test]
    fn zero_sigma_points_are_floored_not_fatal() {
        // Exact-expectation scans quote sigma = 0 wherever parity hits +-1.
        let mut records = synthetic(1.0, 10.0, 0.0, 50.0, 0.0, &grid(41, 0.4), 0.03);
        records[0].sigma = 0.0;
        let fit = fit_damped_sinusoid(&records, &FitConfig::default()).unwrap();
        assert_relative_eq!(fit.frequency, 10.0, max_relative = 1e-7);
    }

    #[test]
    fn all_zero_sigma_rejected() {
        let records = synthetic(0.9, 10.0, 0.0, 1.0, 0.0, &grid(20, 0.3), 0.0);
        assert!(fit_damped_sinusoid(&records, &FitConfig::default()).is_err());
    }

    #[test]
    fn too_few_points_rejected() {
        let records = synthetic(0.9, 10.0, 0.0, 1.0, 0.0, &grid(5, 0.3), 0.05);
        assert!(fit_damped_sinusoid(&records, &FitConfig::default()).is_err());
    }

    #[test]
    fn unresolvable_frequency_rejected() {
        // Half a cycle over the scan: the span gate must fire.
        let records = synthetic(0.9, 1.0, 0.3, 50.0, 0.0, &grid(30, 0.5), 0.04);
        let err = fit_damped_sinusoid(&records, &FitConfig::default()).unwrap_err();
        assert!(err.to_string().contains("one cycle"));
    }

    #[test]
    fn covariance_is_symmetric_with_positive_diagonal() {
        let records = synthetic(0.85, 27.0, 0.7, 0.8, 0.01, &grid(70, 0.35), 0.04);
        let fit = fit_damped_sinusoid(&records, &FitConfig::default()).unwrap();
        for a in 0..5 {
            assert!(fit.covariance[a][a] > 0.0);
            for b in 0..5 {
                assert_abs_diff_eq!(fit.covariance[a][b], fit.covariance[b][a], epsilon = 1e-30);
            }
        }
        assert!(fit.frequency_sigma() > 0.0);
        assert!(fit.contrast_sigma() > 0.0);
    }

    #[test]
    fn noisy_scan_lands_within_quoted_uncertainty_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(422);
        let sigma = 0.08;
        let records: Vec<ParityRecord> = grid(90, 0.3)
            .into_iter()
            .map(|tau| {
                // Sum of 12 uniforms: cheap approximate Gaussian, plenty here.
                let noise: f64 = (0..12).map(|_| rng.random::<f64>()).sum::<f64>() - 6.0;
                ParityRecord {
                    tau,
                    parity: model(&[0.9, 33.35, 0.0, 0.584, 0.0], tau) + sigma * noise,
                    sigma,
                    shots: 100,
                }
            })
            .collect();
        let fit = fit_damped_sinusoid(&records, &FitConfig::default()).unwrap();
        assert!(fit.converged && !fit.degenerate);
        assert!((fit.frequency - 33.35).abs() < 5.0 * fit.frequency_sigma());
        assert!(fit.frequency_sigma() < 0.2);
        let reduced = fit.chi_squared / fit.dof as f64;
        assert!((0.5..2.0).contains(&reduced), "reduced chi2 {reduced}");
    }

    #[test]
    fn frequency_window_restricts_search() {
        // Two-tone data: the window must force the fit onto the weaker tone.
        let taus = grid(120, 0.4);
        let records: Vec<ParityRecord> = taus
            .iter()
            .map(|&tau| ParityRecord {
                tau,
                parity: 0.7 * (TWO_PI * 40.0 * tau).cos() + 0.3 * (TWO_PI * 11.0 * tau).cos(),
                sigma: 0.05,
                shots: 100,
            })
            .collect();
        let narrow = FitConfig {
            freq_min: 5.0,
            freq_max: Some(20.0),
            ..FitConfig::default()
        };
        let fit = fit_damped_sinusoid(&records, &narrow).unwrap();
        assert!(
            (fit.frequency - 11.0).abs() < 1.0,
            "frequency {}",
            fit.frequency
        );
    }
}
