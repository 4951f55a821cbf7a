//! Parity-oscillation model and deterministic Monte-Carlo scan sampling.
//!
//! After the second Ramsey pulse the two-ion parity oscillates as
//! C0 exp(-2 tau / tau_D) cos(lambda tau + phi0): the exponential is the
//! contrast loss from spontaneous decay of either D-state ion, and lambda the
//! state's phase-evolution rate. Quasi-static field noise (one Gaussian field
//! draw per experiment) multiplies the expectation by exp(-(lambda_B sigma_B
//! tau)^2 / 2) — identically 1 for decoherence-free states, whose first-order
//! sensitivity lambda_B vanishes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::constants::PhysicalConstants;
use crate::dataset::{DatasetMeta, EnvironmentSnapshot, ParityDataset, ParityRecord};
use crate::error::{Error, Result};
use crate::exec;
use crate::physics::{FieldGeometry, MagneticEnvironment};
use crate::rng::point_stream;
use crate::states::{self, BellStateSpec};
use crate::trap::TrapEnvironment;

/// Decoherence model for one scan.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NoiseModel {
    /// Lifetime tau_D of the metastable level, s; parity contrast decays as
    /// exp(-2 tau / tau_D) because either ion may decay.
    pub d_state_lifetime: f64,
    /// RMS of quasi-static magnetic-field fluctuations, T.
    pub quasi_static_b_rms: f64,
    /// Preparation contrast C0; mirrors the state spec's contrast in the
    /// config-driven pipeline and takes precedence in the signal model.
    pub preparation_contrast: f64,
    /// Optional extra exponential dephasing rate, 1/s (default 0).
    pub extra_dephasing_rate: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            d_state_lifetime: 1.168,
            quasi_static_b_rms: 0.0,
            preparation_contrast: 0.9,
            extra_dephasing_rate: 0.0,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_state_lifetime.is_finite() && self.d_state_lifetime > 0.0) {
            return Err(Error::InvalidNoise(format!(
                "d_state_lifetime = {} must be positive",
                self.d_state_lifetime
            )));
        }
        if !(self.quasi_static_b_rms.is_finite() && self.quasi_static_b_rms >= 0.0) {
            return Err(Error::InvalidNoise("noise rms must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.preparation_contrast) {
            return Err(Error::InvalidNoise(format!(
                "preparation contrast {} outside [0, 1]",
                self.preparation_contrast
            )));
        }
        if !(self.extra_dephasing_rate.is_finite() && self.extra_dephasing_rate >= 0.0) {
            return Err(Error::InvalidNoise(
                "extra dephasing rate must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// One parity scan: waiting times, shots per point, seed, and noise.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentPlan {
    /// Ramsey waiting times, s.
    pub wait_times: Vec<f64>,
    /// Shots averaged per point.
    pub shots_per_point: u32,
    /// Seed all point substreams derive from.
    pub seed: u64,
    /// Set false to record exact expectation values (no projection noise);
    /// error bars keep their nominal shot-noise size either way.
    pub projection_noise: bool,
    pub noise: NoiseModel,
}

impl ExperimentPlan {
    pub fn new(wait_times: Vec<f64>, shots_per_point: u32, seed: u64, noise: NoiseModel) -> Self {
        Self {
            wait_times,
            shots_per_point,
            seed,
            projection_noise: true,
            noise,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if self.shots_per_point == 0 {
            return Err(Error::InvalidPlan("shots_per_point must be >= 1".into()));
        }
        for (i, &t) in self.wait_times.iter().enumerate() {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::InvalidPlan(format!(
                    "wait time {i} = {t} must be finite and nonnegative"
                )));
            }
        }
        Ok(())
    }
}

/// Expected parity at waiting time `tau` for a state evolving at `total_rate`
/// with bias-field sensitivity `field_sensitivity` (rad/(s T)).
///
/// The quasi-static noise envelope is exactly 1 when the sensitivity or the
/// noise RMS vanishes, i.e. for decoherence-free states.
pub fn parity_expectation(
    spec: &BellStateSpec,
    total_rate: f64,
    field_sensitivity: f64,
    tau: f64,
    noise: &NoiseModel,
) -> f64 {
    let decay = (-2.0 * tau / noise.d_state_lifetime).exp();
    let extra = (-noise.extra_dephasing_rate * tau).exp();
    let blur = field_sensitivity * noise.quasi_static_b_rms * tau;
    let dephasing = (-0.5 * blur * blur).exp();
    noise.preparation_contrast * decay * extra * dephasing * (total_rate * tau + spec.phi0()).cos()
}

/// Draw one scan point: `shots` two-outcome experiments at success probability
/// (1 + expectation)/2, i.e. a Binomial(shots, q) count. Returns the parity
/// estimate 2k/N - 1 and its projection-noise sigma. Each shot consumes
/// exactly one draw of `stream`, which pins the determinism contract.
pub fn sample_point(expectation: f64, shots: u32, stream: &mut ChaCha8Rng) -> Result<(f64, f64)> {
    if !(expectation.is_finite() && expectation.abs() <= 1.0) {
        return Err(Error::ProbabilityRange(expectation));
    }
    if shots == 0 {
        return Err(Error::InvalidPlan("shots must be >= 1".into()));
    }
    let q = 0.5 * (1.0 + expectation);
    let mut k = 0u32;
    for _ in 0..shots {
        if stream.random::<f64>() < q {
            k += 1;
        }
    }
    let estimate = 2.0 * f64::from(k) / f64::from(shots) - 1.0;
    let sigma = ((1.0 - estimate * estimate).max(0.0) / f64::from(shots)).sqrt();
    Ok((estimate, sigma))
}

fn point_record(
    plan: &ExperimentPlan,
    spec: &BellStateSpec,
    rate: f64,
    sensitivity: f64,
    index: usize,
) -> Result<ParityRecord> {
    let tau = plan.wait_times[index];
    let p = parity_expectation(spec, rate, sensitivity, tau, &plan.noise);
    let (parity, sigma) = if plan.projection_noise {
        let mut stream = point_stream(plan.seed, index as u64);
        sample_point(p, plan.shots_per_point, &mut stream)?
    } else {
        let nominal = ((1.0 - p * p).max(0.0) / f64::from(plan.shots_per_point)).sqrt();
        (p, nominal)
    };
    Ok(ParityRecord {
        tau,
        parity,
        sigma,
        shots: plan.shots_per_point,
    })
}

fn assemble(
    plan: &ExperimentPlan,
    spec: &BellStateSpec,
    rate: f64,
    sensitivity: f64,
    records: Vec<Result<ParityRecord>>,
) -> Result<ParityDataset> {
    let records = records.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ParityDataset {
        records,
        meta: DatasetMeta {
            seed: plan.seed,
            shots_per_point: plan.shots_per_point,
            projection_noise: plan.projection_noise,
            state: *spec,
            noise: plan.noise,
            rate_truth: rate,
            field_sensitivity: sensitivity,
            budget: None,
            environment: None,
        },
    })
}

/// Simulate a scan at an externally supplied phase rate (rad/s) and field
/// sensitivity. Scan points are sampled on the parallel map.
pub fn run_plan_at_rate(
    plan: &ExperimentPlan,
    spec: &BellStateSpec,
    total_rate: f64,
    field_sensitivity: f64,
) -> Result<ParityDataset> {
    plan.validate()?;
    let n = plan.wait_times.len();
    let records = exec::indexed_map(n, |i| {
        point_record(plan, spec, total_rate, field_sensitivity, i)
    });
    assemble(plan, spec, total_rate, field_sensitivity, records)
}

/// Sequential twin of [`run_plan_at_rate`]; identical output, kept for
/// benchmarks and determinism cross-checks.
pub fn run_plan_at_rate_serial(
    plan: &ExperimentPlan,
    spec: &BellStateSpec,
    total_rate: f64,
    field_sensitivity: f64,
) -> Result<ParityDataset> {
    plan.validate()?;
    let n = plan.wait_times.len();
    let records = exec::indexed_map_serial(n, |i| {
        point_record(plan, spec, total_rate, field_sensitivity, i)
    });
    assemble(plan, spec, total_rate, field_sensitivity, records)
}

/// Simulate a scan from the full physics model: the shift budget is evaluated
/// once for the operating point, then every waiting time is sampled.
#[allow(clippy::too_many_arguments)]
pub fn run_plan(
    plan: &ExperimentPlan,
    spec: &BellStateSpec,
    trap: &TrapEnvironment,
    env: &MagneticEnvironment,
    geometry: &FieldGeometry,
    theta: f64,
    constants: &PhysicalConstants,
) -> Result<ParityDataset> {
    constants.validate()?;
    env.validate()?;
    geometry.validate()?;
    let separation = trap.ion_separation(constants)?;
    let budget = states::phase_rate(spec, trap, env, geometry, theta, separation, constants)?;
    let sensitivity = spec.field_sensitivity(constants);
    let mut ds = run_plan_at_rate(plan, spec, budget.total, sensitivity)?;
    ds.meta.budget = Some(budget);
    ds.meta.environment = Some(EnvironmentSnapshot {
        axial_frequency: trap.axial_frequency(),
        external_gradient: trap.external_gradient(constants),
        ion_separation: separation,
        bias_field: env.bias_field,
        axial_b_gradient: env.axial_gradient,
        second_order_coeff: env.second_order_coeff,
        beta: geometry.beta,
        epsilon: geometry.epsilon,
        alpha: geometry.alpha,
        theta,
    });
    Ok(ds)
}
