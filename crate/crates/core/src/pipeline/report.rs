//! Serializable run reports, the run manifest, and plot-data writers.
//! Nothing here embeds wall-clock time or machine identity: outputs must be
//! byte-identical across reruns of the same configuration and seed.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::{AngularFit, DampedSinusoidFit, FitConfig, LinearFit, MomentResult};

/// Top-level run manifest: what ran, from which echoed config, what came out.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub name: &'static str,
    pub version: &'static str,
    pub mode: String,
    pub seed: u64,
    /// Relative path of the echoed configuration inside the output directory.
    pub config_echo: String,
    /// External input files consumed (fit-only mode).
    pub inputs: Vec<String>,
    /// Relative paths of everything written, in creation order.
    pub outputs: Vec<String>,
    /// Datasets or fits that failed to converge; empty on a clean run.
    pub nonconverged: Vec<String>,
}

/// 1-sigma errors of a damped-sinusoid fit (square roots of the covariance
/// diagonal), duplicated out of the matrix for direct reading.
#[derive(Debug, Clone, Serialize)]
pub struct SinusoidErrors {
    pub contrast: f64,
    pub frequency_hz: f64,
    pub phase_rad: f64,
    pub damping_time_s: f64,
    pub baseline: f64,
}

impl SinusoidErrors {
    pub fn from_fit(fit: &DampedSinusoidFit) -> Self {
        Self {
            contrast: fit.covariance[0][0].sqrt(),
            frequency_hz: fit.covariance[1][1].sqrt(),
            phase_rad: fit.covariance[2][2].sqrt(),
            damping_time_s: fit.covariance[3][3].sqrt(),
            baseline: fit.covariance[4][4].sqrt(),
        }
    }
}

/// Fit report for one parity dataset.
#[derive(Debug, Clone, Serialize)]
pub struct SinusoidReport {
    pub dataset: String,
    /// |truth| oscillation frequency from the simulated budget, Hz; absent
    /// for external data.
    pub truth_frequency_hz: Option<f64>,
    pub fit: DampedSinusoidFit,
    pub errors: SinusoidErrors,
    pub fit_config: FitConfig,
}

/// Average / half-difference decomposition of the two states' frequencies.
#[derive(Debug, Clone, Serialize)]
pub struct DecompositionReport {
    pub psi1_hz: f64,
    pub psi1_sigma_hz: f64,
    pub psi2_hz: f64,
    pub psi2_sigma_hz: f64,
    /// Quadrupole-dominated average (Delta / 2 pi).
    pub average_hz: f64,
    pub average_sigma_hz: f64,
    /// Magnetic-gradient half-difference (Delta_B' / 2 pi).
    pub half_difference_hz: f64,
    pub half_difference_sigma_hz: f64,
    pub truth_average_hz: Option<f64>,
    pub truth_half_difference_hz: Option<f64>,
}

/// Angular-scan report.
#[derive(Debug, Clone, Serialize)]
pub struct AngleReport {
    pub fit: AngularFit,
    pub beta0_deg: f64,
    pub beta0_sigma_deg: f64,
    /// Model value at the aligned field (beta = beta0): offset + amplitude.
    pub aligned_shift_hz: f64,
    /// Model value at beta0 +- 90 degrees: the offset alone.
    pub perpendicular_shift_hz: f64,
    pub used_points: usize,
    pub truth_beta_axis_deg: f64,
}

/// One gradient-scan operating point.
#[derive(Debug, Clone, Serialize)]
pub struct GradientRow {
    pub label: String,
    /// |applied tip gradient| in V/mm^2 (the linear-fit abscissa).
    pub gradient_vmm2: f64,
    pub psi1_hz: f64,
    pub psi1_sigma_hz: f64,
    pub psi2_hz: f64,
    pub psi2_sigma_hz: f64,
    pub average_hz: f64,
    pub average_sigma_hz: f64,
    pub half_difference_hz: f64,
    pub half_difference_sigma_hz: f64,
    pub truth_average_hz: f64,
    pub truth_half_difference_hz: f64,
}

/// Power-law exponent report (log-log line fit).
#[derive(Debug, Clone, Serialize)]
pub struct PowerLawReport {
    pub exponent: f64,
    pub exponent_sigma: f64,
    pub fit: LinearFit,
}

/// End-of-chain moment report.
#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub moment: MomentResult,
    pub total_sigma: f64,
    /// Straight-line fit of average shift vs |gradient| (Hz vs V/mm^2);
    /// absent in extract mode.
    pub line: Option<LinearFit>,
    pub intercept_hz: Option<f64>,
    pub intercept_sigma_hz: Option<f64>,
    /// c2 B0^2 part of the intercept, Hz.
    pub quadratic_zeeman_hz: Option<f64>,
    /// Intercept remainder attributed to stray static gradients, Hz.
    pub stray_remainder_hz: Option<f64>,
    /// Stray gradient magnitude implied by the remainder, V/mm^2.
    pub implied_stray_gradient_vmm2: Option<f64>,
    /// Simulation truth, for closed-loop comparisons.
    pub theta_true_ea02: Option<f64>,
}

/// Output-directory bookkeeping: creates the directory, hands out paths, and
/// remembers every file written (relative form) for the manifest.
pub struct OutputTracker {
    dir: PathBuf,
    files: Vec<String>,
}

impl OutputTracker {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Relative paths of everything written so far.
    pub fn written(&self) -> &[String] {
        &self.files
    }

    pub fn absolute(&self) -> Vec<PathBuf> {
        self.files.iter().map(|f| self.dir.join(f)).collect()
    }

    fn prepare(&mut self, relative: &str) -> Result<PathBuf> {
        let path = self.dir.join(relative);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        self.files.push(relative.to_string());
        Ok(path)
    }

    pub fn write_text(&mut self, relative: &str, text: &str) -> Result<()> {
        let path = self.prepare(relative)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, relative: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::InvalidDataset(format!("cannot serialize {relative}: {e}")))?;
        text.push('\n');
        self.write_text(relative, &text)
    }

    /// Plot-ready triples "x y sigma", one per line, '#'-prefixed header.
    pub fn write_points(
        &mut self,
        relative: &str,
        header: &str,
        rows: &[(f64, f64, f64)],
    ) -> Result<()> {
        let mut text = format!("# {header}\n");
        for &(x, y, s) in rows {
            text.push_str(&format!("{x:.10e} {y:.10e} {s:.10e}\n"));
        }
        self.write_text(relative, &text)
    }

    /// Plot-ready pairs "x y" for fitted curves.
    pub fn write_curve(&mut self, relative: &str, header: &str, rows: &[(f64, f64)]) -> Result<()> {
        let mut text = format!("# {header}\n");
        for &(x, y) in rows {
            text.push_str(&format!("{x:.10e} {y:.10e}\n"));
        }
        self.write_text(relative, &text)
    }
}
