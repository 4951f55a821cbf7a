//! Run configuration: a single TOML file with sections, every physical
//! quantity written as "VALUE UNIT" and parsed strictly, unknown keys
//! rejected. The raw form round-trips to the echoed copy written into each
//! output directory; the resolved form is all-SI and mode-checked.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::estimation::FitConfig;
use crate::physics::{FieldGeometry, MagneticEnvironment};
use crate::pipeline::units::{parse_optional, parse_quantity, Dimension};
use crate::ramsey::{ExperimentPlan, NoiseModel};
use crate::states::BellStateSpec;
use crate::trap::TrapEnvironment;

/// Execution mode; CLI subcommands map onto these one-to-one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    ParityScan,
    AngleScan,
    GradientScan,
    Extract,
    FitOnly,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::ParityScan => "parity-scan",
            Mode::AngleScan => "angle-scan",
            Mode::GradientScan => "gradient-scan",
            Mode::Extract => "extract",
            Mode::FitOnly => "fit-only",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "parity-scan" => Ok(Mode::ParityScan),
            "angle-scan" => Ok(Mode::AngleScan),
            "gradient-scan" => Ok(Mode::GradientScan),
            "extract" => Ok(Mode::Extract),
            "fit-only" => Ok(Mode::FitOnly),
            other => Err(Error::Config(format!(
                "unknown mode {other:?} (expected parity-scan, angle-scan, \
                 gradient-scan, extract, or fit-only)"
            ))),
        }
    }

    fn simulates(self) -> bool {
        matches!(
            self,
            Mode::ParityScan | Mode::AngleScan | Mode::GradientScan
        )
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    /// Quadrupole moment fed to the simulator, e.g. "1.83 ea02".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_true: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trap: Option<RawTrap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<RawGeometry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnetic: Option<RawMagnetic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<RawStates>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<RawPlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<RawNoise>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<RawFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extract: Option<RawExtract>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_only: Option<RawFitOnly>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTrap {
    /// Calibration constant k in omega_z^2 = k U, plain float in s^-2 V^-1
    /// (the field name carries the unit, like the CSV columns do).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_s2_per_v: Option<f64>,
    /// Alternative calibration: one measured (voltage, frequency) point.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cal_voltage: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cal_frequency: Option<String>,
    /// Single operating tip voltage (parity and angle scans).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub voltage: Option<String>,
    /// Tip-voltage list (gradient scans).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub voltages: Option<Vec<String>>,
    /// Applied-gradient list, bypassing the voltage calibration.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradients: Option<Vec<String>>,
    /// Static stray gradient g_s, signed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stray_gradient: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGeometry {
    /// Field angle to the trap axis for single-angle modes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<String>,
    /// True symmetry axis in dial coordinates (angle-scan truth beta_0).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_axis: Option<String>,
    /// Dial schedule for angle scans.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<String>>,
    /// Field-asymmetry parameter, dimensionless.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMagnetic {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias_field: Option<String>,
    /// Axial gradient B' of the bias magnitude, signed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axial_gradient: Option<String>,
    /// Second-order Zeeman coefficient c2 (shift c2 B0^2).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub second_order_coeff: Option<String>,
    /// Quasi-static rms field noise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_rms: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawStates {
    /// Preparation contrast C0, shared by both states.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contrast: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi0: Option<String>,
    /// Doubled m values (2m) of the four kets |m1 m2> + |m3 m4>.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi1: Option<[i32; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi2: Option<[i32; 4]>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPlan {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shots: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Set false to record exact expectation values.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub projection_noise: Option<bool>,
    /// Explicit waiting times; overrides the generated schedule.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wait_times: Option<Vec<String>>,
    /// Generated schedule: `points` uniform samples from `dense_until` (or 0)
    /// to `stop`, preceded by a dense ramp every `dense_step`, skipping the
    /// open window (`gap_start`, `gap_stop`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dense_until: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dense_step: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_start: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_stop: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNoise {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_state_lifetime: Option<String>,
    /// Extra exponential contrast decay rate, as a frequency.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extra_dephasing: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFit {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freq_min: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freq_max: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawExtract {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope_sigma: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_beta: Option<String>,
    /// Optional intercept decomposition inputs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intercept: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFitOnly {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inputs: Option<Vec<String>>,
}

/// One simulated operating point of a scan.
#[derive(Debug, Clone)]
pub struct ScanPoint {
    pub trap: TrapEnvironment,
}

/// Everything the simulating modes need, in SI.
#[derive(Debug, Clone)]
pub struct SimSetup {
    pub scan_points: Vec<ScanPoint>,
    /// Dial schedule for angle scans, radians.
    pub betas: Vec<f64>,
    /// True symmetry axis in dial coordinates, radians.
    pub beta_axis: f64,
    pub geometry: FieldGeometry,
    pub magnetic: MagneticEnvironment,
    pub psi1: BellStateSpec,
    pub psi2: BellStateSpec,
    pub plan: ExperimentPlan,
}

/// Inputs for the slope-to-moment conversion mode.
#[derive(Debug, Clone)]
pub struct ExtractSetup {
    pub slope_hz_mm2_per_v: f64,
    pub slope_sigma: f64,
    pub delta_beta: f64,
    pub intercept_hz: Option<f64>,
}

/// Mode-checked, all-SI configuration.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub mode: Mode,
    pub output_dir: PathBuf,
    pub constants: PhysicalConstants,
    pub theta_ea02: f64,
    pub theta_si: f64,
    pub sim: Option<SimSetup>,
    pub extract: Option<ExtractSetup>,
    pub fit_only_inputs: Vec<PathBuf>,
    pub fit: FitConfig,
    /// Raw form with overrides applied, ready to echo.
    pub echo: RawConfig,
}

impl ResolvedConfig {
    pub fn seed(&self) -> u64 {
        self.sim.as_ref().map_or(0, |s| s.plan.seed)
    }
}

/// Read and parse a raw configuration file.
pub fn load_raw(path: &Path) -> Result<RawConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Apply CLI overrides onto the raw form so the echo is self-contained.
pub fn apply_overrides(
    raw: &mut RawConfig,
    mode: Mode,
    seed: Option<u64>,
    output_dir: Option<&str>,
    extra_inputs: &[String],
) -> Result<()> {
    if let Some(stated) = &raw.mode {
        let stated_mode = Mode::from_name(stated)?;
        if stated_mode != mode {
            return Err(Error::Config(format!(
                "config declares mode {:?} but the {:?} subcommand was invoked",
                stated_mode.as_str(),
                mode.as_str()
            )));
        }
    }
    raw.mode = Some(mode.as_str().to_string());
    if let Some(s) = seed {
        raw.plan.get_or_insert_with(RawPlan::default).seed = Some(s);
    }
    if let Some(dir) = output_dir {
        raw.output_dir = Some(dir.to_string());
    }
    if !extra_inputs.is_empty() {
        let fo = raw.fit_only.get_or_insert_with(RawFitOnly::default);
        fo.inputs
            .get_or_insert_with(Vec::new)
            .extend(extra_inputs.iter().cloned());
    }
    Ok(())
}

/// Echo TOML for the output directory; reparsing it reproduces the run.
pub fn echo_toml(raw: &RawConfig) -> Result<String> {
    toml::to_string_pretty(raw).map_err(|e| Error::Config(format!("cannot echo config: {e}")))
}

fn require<T>(value: Option<T>, what: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("missing required key: {what}")))
}

/// Strictly positive and finite; quantity strings can parse to NaN or inf.
fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

fn parse_list(list: &[String], dimension: Dimension, context: &str) -> Result<Vec<f64>> {
    list.iter()
        .enumerate()
        .map(|(i, s)| parse_quantity(s, dimension, &format!("{context}[{i}]")))
        .collect()
}

/// Build the waiting-time schedule from a raw plan.
fn build_schedule(plan: &RawPlan) -> Result<Vec<f64>> {
    if let Some(times) = &plan.wait_times {
        let taus = parse_list(times, Dimension::Time, "plan.wait_times")?;
        if taus.is_empty() {
            return Err(Error::Config("plan.wait_times is empty".into()));
        }
        return Ok(taus);
    }
    let stop = parse_quantity(
        &require(plan.stop.clone(), "plan.stop (or plan.wait_times)")?,
        Dimension::Time,
        "plan.stop",
    )?;
    let points = require(plan.points, "plan.points")?;
    if !positive(stop) {
        return Err(Error::Config("plan.stop must be positive".into()));
    }
    if points < 2 {
        return Err(Error::Config("plan.points must be at least 2".into()));
    }
    let dense_until = parse_optional(
        plan.dense_until.as_ref(),
        Dimension::Time,
        "plan.dense_until",
    )?;
    let dense_step = parse_optional(plan.dense_step.as_ref(), Dimension::Time, "plan.dense_step")?;
    let gap_start = parse_optional(plan.gap_start.as_ref(), Dimension::Time, "plan.gap_start")?;
    let gap_stop = parse_optional(plan.gap_stop.as_ref(), Dimension::Time, "plan.gap_stop")?;
    if dense_until.is_some() != dense_step.is_some() {
        return Err(Error::Config(
            "plan.dense_until and plan.dense_step must be given together".into(),
        ));
    }
    if gap_start.is_some() != gap_stop.is_some() {
        return Err(Error::Config(
            "plan.gap_start and plan.gap_stop must be given together".into(),
        ));
    }
    if let (Some(a), Some(b)) = (gap_start, gap_stop) {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(Error::Config(
                "plan.gap_start must precede plan.gap_stop".into(),
            ));
        }
    }

    let mut taus = Vec::new();
    let uniform_start = if let (Some(until), Some(step)) = (dense_until, dense_step) {
        if !positive(step) || !positive(until) || until >= stop {
            return Err(Error::Config(
                "dense ramp needs 0 < dense_step, 0 < dense_until < stop".into(),
            ));
        }
        let mut t = 0.0;
        while t < until - 0.5 * step {
            taus.push(t);
            t += step;
        }
        until
    } else {
        0.0
    };
    for i in 0..points {
        let t = uniform_start + (stop - uniform_start) * i as f64 / (points - 1) as f64;
        let in_gap = matches!((gap_start, gap_stop), (Some(a), Some(b)) if t > a && t < b);
        if !in_gap {
            taus.push(t);
        }
    }
    taus.sort_by(f64::total_cmp);
    taus.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    Ok(taus)
}

fn resolve_trap_points(
    trap: &RawTrap,
    mode: Mode,
    constants: &PhysicalConstants,
) -> Result<Vec<ScanPoint>> {
    let stray = parse_optional(
        trap.stray_gradient.as_ref(),
        Dimension::ElectricGradient,
        "trap.stray_gradient",
    )?
    .unwrap_or(0.0);

    let cal = match (trap.k_s2_per_v, &trap.cal_voltage, &trap.cal_frequency) {
        (Some(k), None, None) => {
            if !positive(k) {
                return Err(Error::Config("trap.k_s2_per_v must be positive".into()));
            }
            Some(k)
        }
        (None, Some(v), Some(f)) => {
            let voltage = parse_quantity(v, Dimension::Voltage, "trap.cal_voltage")?;
            let freq = parse_quantity(f, Dimension::Frequency, "trap.cal_frequency")?;
            let omega = std::f64::consts::TAU * freq;
            Some(
                crate::trap::cal_constant_from_point(voltage, omega)
                    .map_err(|e| Error::Config(e.to_string()))?,
            )
        }
        (None, None, None) => None,
        _ => {
            return Err(Error::Config(
                "give either trap.k_s2_per_v or the cal_voltage/cal_frequency pair, \
                 not a mixture"
                    .into(),
            ))
        }
    };

    let from_voltage = |u: f64| -> Result<ScanPoint> {
        let k = cal.ok_or_else(|| {
            Error::Config("voltages need a trap calibration (k_s2_per_v or cal point)".into())
        })?;
        Ok(ScanPoint {
            trap: TrapEnvironment::from_voltage(u, k, stray)
                .map_err(|e| Error::Config(e.to_string()))?,
        })
    };
    let from_gradient = |g: f64| -> Result<ScanPoint> {
        Ok(ScanPoint {
            trap: TrapEnvironment::from_tip_gradient(g, stray, constants)
                .map_err(|e| Error::Config(e.to_string()))?,
        })
    };

    let mut points = Vec::new();
    match (&trap.voltage, &trap.voltages, &trap.gradients) {
        (Some(u), None, None) => {
            points.push(from_voltage(parse_quantity(
                u,
                Dimension::Voltage,
                "trap.voltage",
            )?)?);
        }
        (None, Some(us), None) => {
            for u in parse_list(us, Dimension::Voltage, "trap.voltages")? {
                points.push(from_voltage(u)?);
            }
        }
        (None, None, Some(gs)) => {
            for g in parse_list(gs, Dimension::ElectricGradient, "trap.gradients")? {
                points.push(from_gradient(g)?);
            }
        }
        (None, None, None) => {
            return Err(Error::Config(
                "trap needs voltage, voltages, or gradients".into(),
            ))
        }
        _ => {
            return Err(Error::Config(
                "give exactly one of trap.voltage, trap.voltages, trap.gradients".into(),
            ))
        }
    }

    match mode {
        Mode::ParityScan | Mode::AngleScan if points.len() != 1 => {
            return Err(Error::Config(format!(
                "{} runs at a single operating point, got {}",
                mode.as_str(),
                points.len()
            )));
        }
        Mode::GradientScan if points.len() < 4 => {
            return Err(Error::Config(format!(
                "gradient-scan needs at least 4 gradient values, got {}",
                points.len()
            )));
        }
        _ => {}
    }
    Ok(points)
}

/// Resolve a raw configuration for `mode`. `base_dir` anchors relative paths
/// (normally the config file's directory).
pub fn resolve(raw: &RawConfig, mode: Mode, base_dir: &Path) -> Result<ResolvedConfig> {
    let constants = PhysicalConstants::codata();
    let output_dir = base_dir.join(raw.output_dir.as_deref().unwrap_or("out"));

    let default_fit = FitConfig::default();
    let fit_raw = raw.fit.clone().unwrap_or_default();
    let fit = FitConfig {
        freq_min: parse_optional(
            fit_raw.freq_min.as_ref(),
            Dimension::Frequency,
            "fit.freq_min",
        )?
        .unwrap_or(default_fit.freq_min),
        freq_max: parse_optional(
            fit_raw.freq_max.as_ref(),
            Dimension::Frequency,
            "fit.freq_max",
        )?,
        max_iterations: fit_raw.max_iterations.unwrap_or(default_fit.max_iterations),
        ..default_fit
    };

    let mut resolved = ResolvedConfig {
        mode,
        output_dir,
        constants,
        theta_ea02: 0.0,
        theta_si: 0.0,
        sim: None,
        extract: None,
        fit_only_inputs: Vec::new(),
        fit,
        echo: raw.clone(),
    };

    if mode.simulates() {
        let theta_ea02 = parse_quantity(
            &require(raw.theta_true.clone(), "theta_true")?,
            Dimension::QuadrupoleMoment,
            "theta_true",
        )?;
        resolved.theta_ea02 = theta_ea02;
        resolved.theta_si = theta_ea02 * constants.atomic_quadrupole_unit();

        let trap = require(raw.trap.as_ref(), "[trap]")?;
        let scan_points = resolve_trap_points(trap, mode, &constants)?;

        let geom = raw.geometry.clone().unwrap_or_default();
        let beta =
            parse_optional(geom.beta.as_ref(), Dimension::Angle, "geometry.beta")?.unwrap_or(0.0);
        let beta_axis = parse_optional(
            geom.beta_axis.as_ref(),
            Dimension::Angle,
            "geometry.beta_axis",
        )?
        .unwrap_or(0.0);
        let alpha =
            parse_optional(geom.alpha.as_ref(), Dimension::Angle, "geometry.alpha")?.unwrap_or(0.0);
        let epsilon = geom.epsilon.unwrap_or(0.0);
        let geometry = FieldGeometry {
            beta,
            epsilon,
            alpha,
        };
        geometry
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let betas = match &geom.betas {
            Some(list) => parse_list(list, Dimension::Angle, "geometry.betas")?,
            None => Vec::new(),
        };
        if mode == Mode::AngleScan {
            if betas.len() < 4 {
                return Err(Error::Config(
                    "angle-scan needs geometry.betas with at least 4 angles".into(),
                ));
            }
            let lo = betas.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = betas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo < std::f64::consts::FRAC_PI_2 - 1e-9 {
                return Err(Error::Config(format!(
                    "angle-scan schedule spans {:.1} degrees; at least 90 are required",
                    (hi - lo).to_degrees()
                )));
            }
        }

        let mag = raw.magnetic.clone().unwrap_or_default();
        let magnetic = MagneticEnvironment {
            bias_field: parse_optional(
                mag.bias_field.as_ref(),
                Dimension::MagneticField,
                "magnetic.bias_field",
            )?
            .unwrap_or(0.0),
            axial_gradient: parse_optional(
                mag.axial_gradient.as_ref(),
                Dimension::MagneticGradient,
                "magnetic.axial_gradient",
            )?
            .unwrap_or(0.0),
            second_order_coeff: parse_optional(
                mag.second_order_coeff.as_ref(),
                Dimension::PerFieldSquared,
                "magnetic.second_order_coeff",
            )?
            .unwrap_or(0.0),
            noise_rms: parse_optional(
                mag.noise_rms.as_ref(),
                Dimension::MagneticField,
                "magnetic.noise_rms",
            )?
            .unwrap_or(0.0),
        };
        magnetic
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;

        let st = raw.states.clone().unwrap_or_default();
        let contrast = st.contrast.unwrap_or(0.9);
        if !(0.0..=1.0).contains(&contrast) {
            return Err(Error::Config(format!(
                "states.contrast {contrast} outside [0, 1]"
            )));
        }
        let phi0 =
            parse_optional(st.phi0.as_ref(), Dimension::Angle, "states.phi0")?.unwrap_or(0.0);
        let make = |m2: Option<[i32; 4]>, fallback: BellStateSpec| -> Result<BellStateSpec> {
            match m2 {
                Some(quad) => BellStateSpec::new(5, quad, phi0, contrast)
                    .map_err(|e| Error::Config(e.to_string())),
                None => Ok(fallback),
            }
        };
        let psi1 = make(st.psi1, BellStateSpec::psi1(contrast, phi0))?;
        let psi2 = make(st.psi2, BellStateSpec::psi2(contrast, phi0))?;

        let noise_raw = raw.noise.clone().unwrap_or_default();
        let noise_default = NoiseModel::default();
        let noise = NoiseModel {
            d_state_lifetime: parse_optional(
                noise_raw.d_state_lifetime.as_ref(),
                Dimension::Time,
                "noise.d_state_lifetime",
            )?
            .unwrap_or(noise_default.d_state_lifetime),
            quasi_static_b_rms: magnetic.noise_rms,
            preparation_contrast: contrast,
            extra_dephasing_rate: parse_optional(
                noise_raw.extra_dephasing.as_ref(),
                Dimension::Frequency,
                "noise.extra_dephasing",
            )?
            .unwrap_or(0.0),
        };
        noise.validate().map_err(|e| Error::Config(e.to_string()))?;

        let plan_raw = raw.plan.clone().unwrap_or_default();
        let wait_times = build_schedule(&plan_raw)?;
        let mut plan = ExperimentPlan::new(
            wait_times,
            plan_raw.shots.unwrap_or(100),
            plan_raw.seed.unwrap_or(1),
            noise,
        );
        plan.projection_noise = plan_raw.projection_noise.unwrap_or(true);
        plan.validate().map_err(|e| Error::Config(e.to_string()))?;

        resolved.sim = Some(SimSetup {
            scan_points,
            betas,
            beta_axis,
            geometry,
            magnetic,
            psi1,
            psi2,
            plan,
        });
    }

    if mode == Mode::GradientScan {
        // The scan computes slope and intercept itself; [extract] may only
        // supply the alignment uncertainty for the systematic.
        if let Some(ex) = raw.extract.as_ref() {
            if ex.slope.is_some() || ex.slope_sigma.is_some() || ex.intercept.is_some() {
                return Err(Error::Config(
                    "gradient-scan measures slope and intercept; [extract] may only \
                     set delta_beta"
                        .into(),
                ));
            }
            let delta_beta = parse_optional(
                ex.delta_beta.as_ref(),
                Dimension::Angle,
                "extract.delta_beta",
            )?
            .unwrap_or(0.0);
            resolved.extract = Some(ExtractSetup {
                slope_hz_mm2_per_v: 0.0,
                slope_sigma: 0.0,
                delta_beta,
                intercept_hz: None,
            });
        }
    }

    if mode == Mode::Extract {
        let ex = require(raw.extract.as_ref(), "[extract]")?;
        let slope = parse_quantity(
            &require(ex.slope.clone(), "extract.slope")?,
            Dimension::ShiftSlope,
            "extract.slope",
        )?;
        let slope_sigma = parse_quantity(
            &require(ex.slope_sigma.clone(), "extract.slope_sigma")?,
            Dimension::ShiftSlope,
            "extract.slope_sigma",
        )?;
        let delta_beta = parse_optional(
            ex.delta_beta.as_ref(),
            Dimension::Angle,
            "extract.delta_beta",
        )?
        .unwrap_or(0.0);
        let intercept: Option<f64> = match &ex.intercept {
            Some(text) => Some(parse_quantity(
                text,
                Dimension::Frequency,
                "extract.intercept",
            )?),
            None => None,
        };
        resolved.extract = Some(ExtractSetup {
            slope_hz_mm2_per_v: slope,
            slope_sigma,
            delta_beta,
            intercept_hz: intercept,
        });
    }

    if mode == Mode::FitOnly {
        let inputs = raw
            .fit_only
            .as_ref()
            .and_then(|f| f.inputs.clone())
            .unwrap_or_default();
        if inputs.is_empty() {
            return Err(Error::Config(
                "fit-only needs input CSVs (fit_only.inputs or command-line paths)".into(),
            ));
        }
        resolved.fit_only_inputs = inputs.iter().map(|p| base_dir.join(p)).collect();
    }

    Ok(resolved)
}
