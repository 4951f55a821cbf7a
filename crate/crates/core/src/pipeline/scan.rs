//! Mode orchestration: simulate (where the mode calls for it), fit, and write
//! the output directory. Scan points execute under the deterministic
//! substream contract, so results are independent of thread count; all file
//! writes happen after the numerics.
//!
//! Fit failures on individual datasets are recorded in the manifest's
//! `nonconverged` list and the run continues with whatever remains; callers
//! translate a non-empty list into the dedicated exit status.

use std::f64::consts::TAU;
use std::path::PathBuf;

use serde::Serialize;

use crate::dataset::ParityDataset;
use crate::error::{Error, Result};
use crate::estimation::{
    decompose_offset, extract_moment, fit_angular, fit_damped_sinusoid, fit_linear_weighted,
    fit_power_law, DampedSinusoidFit,
};
use crate::physics::FieldGeometry;
use crate::pipeline::config;
use crate::pipeline::config::{Mode, ResolvedConfig, SimSetup};
use crate::pipeline::report::{
    AngleReport, DecompositionReport, GradientRow, Manifest, MomentReport, OutputTracker,
    PowerLawReport, SinusoidErrors, SinusoidReport,
};
use crate::pipeline::units::{parse_optional, Dimension};
use crate::ramsey;
use crate::rng::replicate_seed;
use crate::states::{decompose_average_difference, BellStateSpec};
use crate::trap::TrapEnvironment;

/// What a finished run hands back to the CLI.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub nonconverged: Vec<String>,
}

/// Execute the configured mode, writing everything under the output
/// directory. `emit_plot_data` additionally writes plot-ready text files.
pub fn run(cfg: &ResolvedConfig, emit_plot_data: bool) -> Result<RunSummary> {
    let mut out = OutputTracker::new(&cfg.output_dir)?;
    out.write_text("config.echo.toml", &config::echo_toml(&cfg.echo)?)?;

    let mut nonconverged = Vec::new();
    let mut inputs = Vec::new();
    match cfg.mode {
        Mode::ParityScan => parity_scan(cfg, emit_plot_data, &mut out, &mut nonconverged)?,
        Mode::AngleScan => angle_scan(cfg, emit_plot_data, &mut out, &mut nonconverged)?,
        Mode::GradientScan => gradient_scan(cfg, emit_plot_data, &mut out, &mut nonconverged)?,
        Mode::Extract => extract_mode(cfg, &mut out)?,
        Mode::FitOnly => fit_only(cfg, &mut out, &mut nonconverged, &mut inputs)?,
    }

    let manifest = Manifest {
        name: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        mode: cfg.mode.as_str().to_string(),
        seed: cfg.seed(),
        config_echo: "config.echo.toml".to_string(),
        inputs,
        outputs: out.written().to_vec(),
        nonconverged: nonconverged.clone(),
    };
    out.write_json("manifest.json", &manifest)?;

    Ok(RunSummary {
        output_dir: cfg.output_dir.clone(),
        files: out.absolute(),
        nonconverged,
    })
}

fn sinusoid_value(fit: &DampedSinusoidFit, tau: f64) -> f64 {
    fit.contrast * (-tau / fit.damping_time).exp() * (TAU * fit.frequency * tau + fit.phase).cos()
        + fit.baseline
}

/// Simulate one dataset with a per-dataset derived seed.
fn simulate(
    cfg: &ResolvedConfig,
    sim: &SimSetup,
    trap: &TrapEnvironment,
    geometry: &FieldGeometry,
    spec: &BellStateSpec,
    dataset_index: u64,
) -> Result<ParityDataset> {
    let mut plan = sim.plan.clone();
    plan.seed = replicate_seed(sim.plan.seed, dataset_index);
    ramsey::run_plan(
        &plan,
        spec,
        trap,
        &sim.magnetic,
        geometry,
        cfg.theta_si,
        &cfg.constants,
    )
}

/// Fitted frequency of one dataset, if the fit is trustworthy.
struct FittedFrequency {
    frequency_hz: f64,
    sigma_hz: f64,
    fit: DampedSinusoidFit,
}

/// Write `{stem}.csv`, `{stem}.meta.json`, `{stem}.fit.json`; a fit failure
/// is recorded instead of propagated so sibling datasets still run.
fn write_and_fit(
    cfg: &ResolvedConfig,
    ds: &ParityDataset,
    stem: &str,
    out: &mut OutputTracker,
    nonconverged: &mut Vec<String>,
) -> Result<Option<FittedFrequency>> {
    out.write_text(&format!("{stem}.csv"), &ds.to_csv_string()?)?;
    out.write_text(&format!("{stem}.meta.json"), &ds.meta_json())?;
    let truth_hz = ds.meta.rate_truth.abs() / TAU;
    match fit_damped_sinusoid(&ds.records, &cfg.fit) {
        Ok(fit) => {
            let report = SinusoidReport {
                dataset: format!("{stem}.csv"),
                truth_frequency_hz: Some(truth_hz),
                errors: SinusoidErrors::from_fit(&fit),
                fit: fit.clone(),
                fit_config: cfg.fit.clone(),
            };
            out.write_json(&format!("{stem}.fit.json"), &report)?;
            if fit.converged && !fit.degenerate {
                Ok(Some(FittedFrequency {
                    frequency_hz: fit.frequency,
                    sigma_hz: fit.frequency_sigma(),
                    fit,
                }))
            } else {
                nonconverged.push(format!("{stem}: fit did not converge cleanly"));
                Ok(None)
            }
        }
        Err(e) => {
            nonconverged.push(format!("{stem}: {e}"));
            Ok(None)
        }
    }
}

fn decomposition_report(
    f1: &FittedFrequency,
    f2: &FittedFrequency,
    truth: Option<(f64, f64)>,
) -> DecompositionReport {
    let (average, half_difference) = decompose_average_difference(f1.frequency_hz, f2.frequency_hz);
    let sigma = 0.5 * f1.sigma_hz.hypot(f2.sigma_hz);
    let truth_decomposed = truth.map(|(t1, t2)| decompose_average_difference(t1, t2));
    DecompositionReport {
        psi1_hz: f1.frequency_hz,
        psi1_sigma_hz: f1.sigma_hz,
        psi2_hz: f2.frequency_hz,
        psi2_sigma_hz: f2.sigma_hz,
        average_hz: average,
        average_sigma_hz: sigma,
        half_difference_hz: half_difference,
        half_difference_sigma_hz: sigma,
        truth_average_hz: truth_decomposed.map(|d| d.0),
        truth_half_difference_hz: truth_decomposed.map(|d| d.1),
    }
}

fn parity_scan(
    cfg: &ResolvedConfig,
    emit_plot_data: bool,
    out: &mut OutputTracker,
    nonconverged: &mut Vec<String>,
) -> Result<()> {
    let sim = cfg.sim.as_ref().expect("parity-scan resolves a simulation");
    let trap = &sim.scan_points[0].trap;
    let mut fitted: Vec<Option<FittedFrequency>> = Vec::new();
    let mut truths = Vec::new();

    for (index, spec) in [&sim.psi1, &sim.psi2].into_iter().enumerate() {
        let stem = format!("psi{}", index + 1);
        let ds = simulate(cfg, sim, trap, &sim.geometry, spec, index as u64)?;
        truths.push(ds.meta.rate_truth.abs() / TAU);
        let fit = write_and_fit(cfg, &ds, &stem, out, nonconverged)?;
        if emit_plot_data {
            let rows: Vec<(f64, f64, f64)> = ds
                .records
                .iter()
                .map(|r| (r.tau, r.parity, r.sigma))
                .collect();
            out.write_points(&format!("plot/{stem}.dat"), "tau_s parity sigma", &rows)?;
            if let Some(f) = &fit {
                let tau_max = rows.last().map_or(0.3, |r| r.0);
                let curve: Vec<(f64, f64)> = (0..=400)
                    .map(|i| {
                        let tau = tau_max * i as f64 / 400.0;
                        (tau, sinusoid_value(&f.fit, tau))
                    })
                    .collect();
                out.write_curve(&format!("plot/{stem}.curve.dat"), "tau_s parity", &curve)?;
            }
        }
        fitted.push(fit);
    }

    if let [Some(f1), Some(f2)] = &fitted[..] {
        let report = decomposition_report(f1, f2, Some((truths[0], truths[1])));
        out.write_json("decomposition.json", &report)?;
    } else {
        nonconverged.push("decomposition: skipped, a state fit is unusable".to_string());
    }
    Ok(())
}

#[derive(Serialize)]
struct AngleRow {
    beta_deg: f64,
    shift_hz: f64,
    sigma_hz: f64,
    psi1_hz: f64,
    psi1_sigma_hz: f64,
    psi2_hz: f64,
    psi2_sigma_hz: f64,
    truth_shift_hz: f64,
}

fn csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| Error::InvalidDataset(e.to_string()))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::InvalidDataset(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidDataset(e.to_string()))
}

fn angle_scan(
    cfg: &ResolvedConfig,
    emit_plot_data: bool,
    out: &mut OutputTracker,
    nonconverged: &mut Vec<String>,
) -> Result<()> {
    let sim = cfg.sim.as_ref().expect("angle-scan resolves a simulation");
    let trap = &sim.scan_points[0].trap;
    let mut rows: Vec<AngleRow> = Vec::new();

    for (angle_index, &dial) in sim.betas.iter().enumerate() {
        // The dial reading is lab bookkeeping; the physical tilt to the trap
        // axis is dial minus the true symmetry axis.
        let geometry = FieldGeometry {
            beta: dial - sim.beta_axis,
            ..sim.geometry
        };
        let mut per_state: Vec<Option<(f64, f64)>> = Vec::new(); // signed Hz, sigma
        let mut truth_signed = 0.0;
        for (state_index, spec) in [&sim.psi1, &sim.psi2].into_iter().enumerate() {
            let stem = format!("datasets/angle{angle_index:02}.psi{}", state_index + 1);
            let index = (angle_index * 2 + state_index) as u64;
            let ds = simulate(cfg, sim, trap, &geometry, spec, index)?;
            // The parity frequency is sign-blind; take the branch from the
            // simulation truth (a real run tracks it via the phase evolution).
            let sign = if ds.meta.rate_truth < 0.0 { -1.0 } else { 1.0 };
            truth_signed += 0.5 * ds.meta.rate_truth / TAU;
            let fit = write_and_fit(cfg, &ds, &stem, out, nonconverged)?;
            per_state.push(fit.map(|f| (sign * f.frequency_hz, f.sigma_hz)));
        }
        if let [Some((s1, e1)), Some((s2, e2))] = per_state[..] {
            rows.push(AngleRow {
                beta_deg: dial.to_degrees(),
                shift_hz: 0.5 * (s1 + s2),
                sigma_hz: 0.5 * e1.hypot(e2),
                psi1_hz: s1,
                psi1_sigma_hz: e1,
                psi2_hz: s2,
                psi2_sigma_hz: e2,
                truth_shift_hz: truth_signed,
            });
        } else {
            nonconverged.push(format!(
                "angle{angle_index:02}: dropped from the angular fit"
            ));
        }
    }

    out.write_text("angle_shifts.csv", &csv_string(&rows)?)?;

    let points: Vec<(f64, f64, f64)> = rows
        .iter()
        .map(|r| (r.beta_deg.to_radians(), r.shift_hz, r.sigma_hz))
        .collect();
    match fit_angular(&points) {
        Ok(fit) => {
            let report = AngleReport {
                beta0_deg: fit.beta0.to_degrees(),
                beta0_sigma_deg: fit.beta0_sigma().to_degrees(),
                aligned_shift_hz: fit.offset + fit.amplitude,
                perpendicular_shift_hz: fit.offset,
                used_points: points.len(),
                truth_beta_axis_deg: sim.beta_axis.to_degrees(),
                fit: fit.clone(),
            };
            out.write_json("angular.fit.json", &report)?;
            if emit_plot_data {
                let pts: Vec<(f64, f64, f64)> = rows
                    .iter()
                    .map(|r| (r.beta_deg, r.shift_hz, r.sigma_hz))
                    .collect();
                out.write_points("plot/angle_points.dat", "beta_deg shift_hz sigma_hz", &pts)?;
                let lo = rows.first().map_or(0.0, |r| r.beta_deg) - 5.0;
                let hi = rows.last().map_or(90.0, |r| r.beta_deg) + 5.0;
                let curve: Vec<(f64, f64)> = (0..=300)
                    .map(|i| {
                        let deg = lo + (hi - lo) * i as f64 / 300.0;
                        let c = (deg.to_radians() - fit.beta0).cos();
                        (deg, fit.offset + fit.amplitude * c * c)
                    })
                    .collect();
                out.write_curve("plot/angle_curve.dat", "beta_deg shift_hz", &curve)?;
            }
        }
        Err(e) => nonconverged.push(format!("angular: {e}")),
    }
    Ok(())
}

fn gradient_scan(
    cfg: &ResolvedConfig,
    emit_plot_data: bool,
    out: &mut OutputTracker,
    nonconverged: &mut Vec<String>,
) -> Result<()> {
    let sim = cfg
        .sim
        .as_ref()
        .expect("gradient-scan resolves a simulation");
    let mut rows: Vec<GradientRow> = Vec::new();

    for (point_index, point) in sim.scan_points.iter().enumerate() {
        let label = format!("g{point_index}");
        let gradient_vmm2 = point.trap.tip_gradient(&cfg.constants).abs() / 1e6;
        let mut fitted: Vec<Option<FittedFrequency>> = Vec::new();
        let mut truths = Vec::new();
        for (state_index, spec) in [&sim.psi1, &sim.psi2].into_iter().enumerate() {
            let stem = format!("datasets/{label}.psi{}", state_index + 1);
            let index = (point_index * 2 + state_index) as u64;
            let ds = simulate(cfg, sim, &point.trap, &sim.geometry, spec, index)?;
            truths.push(ds.meta.rate_truth.abs() / TAU);
            fitted.push(write_and_fit(cfg, &ds, &stem, out, nonconverged)?);
        }
        if let [Some(f1), Some(f2)] = &fitted[..] {
            let d = decomposition_report(f1, f2, Some((truths[0], truths[1])));
            rows.push(GradientRow {
                label,
                gradient_vmm2,
                psi1_hz: d.psi1_hz,
                psi1_sigma_hz: d.psi1_sigma_hz,
                psi2_hz: d.psi2_hz,
                psi2_sigma_hz: d.psi2_sigma_hz,
                average_hz: d.average_hz,
                average_sigma_hz: d.average_sigma_hz,
                half_difference_hz: d.half_difference_hz,
                half_difference_sigma_hz: d.half_difference_sigma_hz,
                truth_average_hz: d.truth_average_hz.unwrap_or(f64::NAN),
                truth_half_difference_hz: d.truth_half_difference_hz.unwrap_or(f64::NAN),
            });
        } else {
            nonconverged.push(format!("{label}: dropped from the gradient fit"));
        }
    }

    out.write_text("gradient_shifts.csv", &csv_string(&rows)?)?;
    if rows.len() < 2 {
        nonconverged.push("gradient line fit: fewer than two usable points".to_string());
        return Ok(());
    }

    let line_points: Vec<(f64, f64, f64)> = rows
        .iter()
        .map(|r| (r.gradient_vmm2, r.average_hz, r.average_sigma_hz))
        .collect();
    let line = fit_linear_weighted(&line_points)?;

    let delta_beta = cfg.extract.as_ref().map_or(0.0, |e| e.delta_beta);
    let moment = extract_moment(line.slope, line.slope_sigma(), delta_beta, &cfg.constants)?;
    let (quadratic, remainder) = decompose_offset(
        line.intercept,
        sim.magnetic.bias_field,
        sim.magnetic.second_order_coeff,
    );
    let implied_stray = if line.slope.abs() > 0.0 {
        Some((remainder / line.slope).abs())
    } else {
        None
    };
    let report = MomentReport {
        total_sigma: moment.total_sigma(),
        moment,
        intercept_hz: Some(line.intercept),
        intercept_sigma_hz: Some(line.intercept_sigma()),
        quadratic_zeeman_hz: Some(quadratic),
        stray_remainder_hz: Some(remainder),
        implied_stray_gradient_vmm2: implied_stray,
        theta_true_ea02: Some(cfg.theta_ea02),
        line: Some(line.clone()),
    };
    out.write_json("moment.json", &report)?;

    // Half-difference scaling law Delta_B' ~ gradient^(-1/3) via d.
    let power_points: Vec<(f64, f64, f64)> = rows
        .iter()
        .map(|r| {
            (
                r.gradient_vmm2,
                r.half_difference_hz,
                r.half_difference_sigma_hz.max(1e-12),
            )
        })
        .collect();
    let mut power_fit = None;
    match fit_power_law(&power_points) {
        Ok(fit) => {
            let report = PowerLawReport {
                exponent: fit.slope,
                exponent_sigma: fit.slope_sigma(),
                fit: fit.clone(),
            };
            out.write_json("bprime_power.fit.json", &report)?;
            power_fit = Some(fit);
        }
        Err(e) => nonconverged.push(format!("power-law: {e}")),
    }

    if emit_plot_data {
        out.write_points(
            "plot/gradient_points.dat",
            "gradient_vmm2 average_hz sigma_hz",
            &line_points,
        )?;
        let x_max = line_points.iter().map(|p| p.0).fold(0.0, f64::max) * 1.05;
        let line_curve: Vec<(f64, f64)> = (0..=50)
            .map(|i| {
                let x = x_max * i as f64 / 50.0;
                (x, line.intercept + line.slope * x)
            })
            .collect();
        out.write_curve(
            "plot/gradient_line.dat",
            "gradient_vmm2 average_hz",
            &line_curve,
        )?;
        out.write_points(
            "plot/bprime_points.dat",
            "gradient_vmm2 half_difference_hz sigma_hz",
            &power_points,
        )?;
        if let Some(p) = &power_fit {
            let x_lo = power_points
                .iter()
                .map(|q| q.0)
                .fold(f64::INFINITY, f64::min)
                * 0.9;
            let x_hi = power_points.iter().map(|q| q.0).fold(0.0, f64::max) * 1.1;
            let curve: Vec<(f64, f64)> = (0..=60)
                .map(|i| {
                    let x = x_lo * (x_hi / x_lo).powf(i as f64 / 60.0);
                    (x, p.intercept.exp() * x.powf(p.slope))
                })
                .collect();
            out.write_curve(
                "plot/bprime_curve.dat",
                "gradient_vmm2 half_difference_hz",
                &curve,
            )?;
        }
    }
    Ok(())
}

fn extract_mode(cfg: &ResolvedConfig, out: &mut OutputTracker) -> Result<()> {
    let ex = cfg.extract.as_ref().expect("extract resolves its inputs");
    let moment = extract_moment(
        ex.slope_hz_mm2_per_v,
        ex.slope_sigma,
        ex.delta_beta,
        &cfg.constants,
    )?;
    // Intercept decomposition is offered when the config also states the
    // field conditions the intercept was measured under.
    let mag = cfg.echo.magnetic.clone().unwrap_or_default();
    let bias = parse_optional(
        mag.bias_field.as_ref(),
        Dimension::MagneticField,
        "magnetic.bias_field",
    )?;
    let c2 = parse_optional(
        mag.second_order_coeff.as_ref(),
        Dimension::PerFieldSquared,
        "magnetic.second_order_coeff",
    )?;
    let decomposed = match (ex.intercept_hz, bias, c2) {
        (Some(intercept), Some(b0), Some(c2)) => {
            let (quadratic, remainder) = decompose_offset(intercept, b0, c2);
            let implied = if ex.slope_hz_mm2_per_v != 0.0 {
                Some((remainder / ex.slope_hz_mm2_per_v).abs())
            } else {
                None
            };
            Some((intercept, quadratic, remainder, implied))
        }
        _ => None,
    };
    let report = MomentReport {
        total_sigma: moment.total_sigma(),
        moment,
        line: None,
        intercept_hz: decomposed.map(|d| d.0),
        intercept_sigma_hz: None,
        quadratic_zeeman_hz: decomposed.map(|d| d.1),
        stray_remainder_hz: decomposed.map(|d| d.2),
        implied_stray_gradient_vmm2: decomposed.and_then(|d| d.3),
        theta_true_ea02: None,
    };
    out.write_json("moment.json", &report)
}

fn fit_only(
    cfg: &ResolvedConfig,
    out: &mut OutputTracker,
    nonconverged: &mut Vec<String>,
    inputs: &mut Vec<String>,
) -> Result<()> {
    let mut used_stems: Vec<String> = Vec::new();
    let mut fitted: Vec<Option<FittedFrequency>> = Vec::new();
    for (index, path) in cfg.fit_only_inputs.iter().enumerate() {
        inputs.push(path.display().to_string());
        let records = crate::dataset::read_records_csv(path)?;
        let mut stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("input{index}"));
        if used_stems.contains(&stem) {
            stem = format!("{stem}_{index}");
        }
        used_stems.push(stem.clone());
        match fit_damped_sinusoid(&records, &cfg.fit) {
            Ok(fit) => {
                let report = SinusoidReport {
                    dataset: path.display().to_string(),
                    truth_frequency_hz: None,
                    errors: SinusoidErrors::from_fit(&fit),
                    fit: fit.clone(),
                    fit_config: cfg.fit.clone(),
                };
                out.write_json(&format!("{stem}.fit.json"), &report)?;
                if fit.converged && !fit.degenerate {
                    fitted.push(Some(FittedFrequency {
                        frequency_hz: fit.frequency,
                        sigma_hz: fit.frequency_sigma(),
                        fit,
                    }));
                } else {
                    nonconverged.push(format!("{stem}: fit did not converge cleanly"));
                    fitted.push(None);
                }
            }
            Err(e) => {
                nonconverged.push(format!("{stem}: {e}"));
                fitted.push(None);
            }
        }
    }
    if let [Some(f1), Some(f2)] = &fitted[..] {
        let report = decomposition_report(f1, f2, None);
        out.write_json("decomposition.json", &report)?;
    }
    Ok(())
}

/// Resolve + run in one call; convenience for tests and the CLI.
pub fn run_from_raw(
    raw: &config::RawConfig,
    mode: Mode,
    base_dir: &std::path::Path,
    emit_plot_data: bool,
) -> Result<RunSummary> {
    let cfg = config::resolve(raw, mode, base_dir)?;
    run(&cfg, emit_plot_data)
}
