//! Estimation pipeline: damped-sinusoid, weighted-linear, and angular fits,
//! plus the conversion from a fitted shift-versus-gradient slope to the
//! quadrupole moment.

mod angular;
mod linear;
mod moment;
mod sinusoid;

pub use angular::{fit_angular, AngularFit};
pub use linear::{fit_linear_weighted, fit_power_law, LinearFit};
pub use moment::{decompose_offset, extract_moment, slope_for_moment, MomentResult};
pub use sinusoid::{fit_damped_sinusoid, DampedSinusoidFit, FitConfig};

use nalgebra::{SMatrix, SVector};

/// Result of the shared damped least-squares refinement.
pub(crate) struct LmOutcome<const P: usize> {
    pub params: [f64; P],
    pub chi2: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Iteration budget and stopping thresholds for the refinement loop.
pub(crate) struct LmSettings {
    pub max_iterations: usize,
    pub cost_tolerance: f64,
    pub step_tolerance: f64,
}

/// Weighted Levenberg-Marquardt: Gauss-Newton steps with an adaptive damping
/// factor on the normal-matrix diagonal. `data` holds (x, y, weight) with
/// weight = 1/sigma^2; `clamp` projects parameters back into their box after
/// every trial step. Robustness is expected to come from the caller's
/// initialization, not from this refiner.
pub(crate) fn levenberg_marquardt<const P: usize>(
    data: &[(f64, f64, f64)],
    init: [f64; P],
    model: &dyn Fn(&[f64; P], f64) -> f64,
    jacobian: &dyn Fn(&[f64; P], f64) -> [f64; P],
    clamp: &dyn Fn(&mut [f64; P]),
    settings: &LmSettings,
) -> LmOutcome<P> {
    let chi2_of = |p: &[f64; P]| -> f64 {
        data.iter()
            .map(|&(x, y, w)| {
                let r = y - model(p, x);
                w * r * r
            })
            .sum()
    };

    let mut params = init;
    clamp(&mut params);
    let mut chi2 = chi2_of(&params);
    let mut damping = 1e-3;
    let mut converged = chi2 < 1e-22; // exact data needs no steps
    let mut iterations = 0;

    'outer: while iterations < settings.max_iterations && !converged {
        iterations += 1;

        let mut normal = SMatrix::<f64, P, P>::zeros();
        let mut grad = SVector::<f64, P>::zeros();
        for &(x, y, w) in data {
            let j = jacobian(&params, x);
            let r = y - model(&params, x);
            for a in 0..P {
                grad[a] += w * j[a] * r;
                for b in a..P {
                    normal[(a, b)] += w * j[a] * j[b];
                }
            }
        }
        for a in 0..P {
            for b in 0..a {
                normal[(a, b)] = normal[(b, a)];
            }
        }

        loop {
            let mut damped = normal;
            for a in 0..P {
                // Marquardt scaling keeps the step well-conditioned across
                // wildly different parameter magnitudes.
                damped[(a, a)] += damping * normal[(a, a)].max(1e-30);
            }
            // J^T W J is positive semidefinite, so the damped matrix is
            // positive definite; Cholesky doubles as the singularity probe.
            let Some(step) = damped.cholesky().map(|ch| ch.solve(&grad)) else {
                damping *= 10.0;
                if damping > 1e12 {
                    break 'outer;
                }
                continue;
            };
            let mut trial = params;
            for a in 0..P {
                trial[a] += step[a];
            }
            clamp(&mut trial);
            let trial_chi2 = chi2_of(&trial);
            if trial_chi2 <= chi2 {
                let decrease = (chi2 - trial_chi2) / chi2.max(1e-300);
                let step_norm = step.norm();
                params = trial;
                chi2 = trial_chi2;
                damping = (damping / 3.0).max(1e-12);
                if decrease < settings.cost_tolerance
                    || step_norm < settings.step_tolerance
                    || chi2 < 1e-22
                {
                    converged = true;
                }
                break;
            }
            damping *= 10.0;
            if damping > 1e12 {
                break 'outer; // no downhill step left at any damping
            }
        }
    }

    LmOutcome {
        params,
        chi2,
        converged,
        iterations,
    }
}

/// Parameter covariance (J^T W J)^{-1} at the fitted point, symmetrized.
/// `None` when the normal matrix is singular.
pub(crate) fn parameter_covariance<const P: usize>(
    data: &[(f64, f64, f64)],
    params: &[f64; P],
    jacobian: &dyn Fn(&[f64; P], f64) -> [f64; P],
) -> Option<[[f64; P]; P]> {
    let mut normal = SMatrix::<f64, P, P>::zeros();
    for &(x, _, w) in data {
        let j = jacobian(params, x);
        for a in 0..P {
            for b in 0..P {
                normal[(a, b)] += w * j[a] * j[b];
            }
        }
    }
    let inv = normal.cholesky()?.inverse();
    let mut cov = [[0.0; P]; P];
    for a in 0..P {
        for b in 0..P {
            cov[a][b] = 0.5 * (inv[(a, b)] + inv[(b, a)]);
        }
    }
    if cov.iter().flatten().any(|v| !v.is_finite()) {
        return None;
    }
    Some(cov)
}
