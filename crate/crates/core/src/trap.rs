//! Linear-trap model: tip voltage, axial frequency, electric-field gradient,
//! and two-ion equilibrium separation.
//!
//! The tip electrodes produce a harmonic axial well whose curvature scales
//! linearly with the applied voltage, omega_z = sqrt(k U). Everything else is
//! derived: the field gradient at the trap center is dE_z/dz = -m omega_z^2/e
//! (negative for a confining well), and two ions sit at the equilibrium
//! distance where Coulomb repulsion balances the well.

use serde::Serialize;

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};

/// Axial center-of-mass frequency sqrt(k U), rad/s.
///
/// `cal_constant` is the trap calibration k in (rad/s)^2 per volt, pinned by
/// one measured (voltage, frequency) pair.
pub fn axial_frequency(tip_voltage: f64, cal_constant: f64) -> Result<f64> {
    if !(cal_constant.is_finite() && cal_constant > 0.0) {
        return Err(Error::InvalidTrap(format!(
            "calibration constant {cal_constant} must be positive"
        )));
    }
    if !(tip_voltage.is_finite() && tip_voltage >= 0.0) {
        return Err(Error::InvalidTrap(format!(
            "tip voltage {tip_voltage} must be nonnegative"
        )));
    }
    Ok((cal_constant * tip_voltage).sqrt())
}

/// Calibration constant k = omega^2/U from one measured operating point.
pub fn cal_constant_from_point(tip_voltage: f64, axial_frequency: f64) -> Result<f64> {
    if !(tip_voltage.is_finite() && tip_voltage > 0.0)
        || !(axial_frequency.is_finite() && axial_frequency > 0.0)
    {
        return Err(Error::InvalidTrap(
            "calibration point must have positive voltage and frequency".into(),
        ));
    }
    Ok(axial_frequency * axial_frequency / tip_voltage)
}

/// Electric-field gradient dE_z/dz = -m omega_z^2 / e at the trap center,
/// V/m^2. Negative for a confining well.
pub fn field_gradient(axial_frequency: f64, constants: &PhysicalConstants) -> f64 {
    -constants.ion_mass * axial_frequency * axial_frequency / constants.elementary_charge
}

/// Axial frequency that produces a given field-gradient magnitude,
/// omega = sqrt(|g| e / m). Inverse of [`field_gradient`].
pub fn axial_frequency_for_gradient(gradient: f64, constants: &PhysicalConstants) -> f64 {
    (gradient.abs() * constants.elementary_charge / constants.ion_mass).sqrt()
}

/// Equilibrium separation of two ions, d = (e^2 / (2 pi eps0 m omega^2))^{1/3}.
pub fn ion_separation(axial_frequency: f64, constants: &PhysicalConstants) -> Result<f64> {
    if !(axial_frequency.is_finite() && axial_frequency > 0.0) {
        return Err(Error::ZeroFrequency);
    }
    let d3 = 2.0 * constants.coulomb_e2 / (constants.ion_mass * axial_frequency * axial_frequency);
    Ok(d3.cbrt())
}

/// Total gradient experienced by either ion of the crystal.
///
/// At the equilibrium spacing the neighbor's Coulomb field contributes a
/// gradient equal to the trap's own, so the external gradient doubles.
pub fn gradient_at_ion(external_gradient: f64) -> f64 {
    2.0 * external_gradient
}

/// One trap operating point: the axial confinement actually realized, plus any
/// stray dc field gradient superimposed on the tip-produced one.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TrapEnvironment {
    /// Axial center-of-mass frequency, rad/s.
    axial_frequency: f64,
    /// Stray gradient added to the tip-produced dE_z/dz, V/m^2.
    stray_gradient: f64,
}

impl TrapEnvironment {
    /// Operating point from a tip voltage and calibration constant.
    pub fn from_voltage(tip_voltage: f64, cal_constant: f64, stray_gradient: f64) -> Result<Self> {
        Ok(Self {
            axial_frequency: axial_frequency(tip_voltage, cal_constant)?,
            stray_gradient,
        })
    }

    /// Operating point from the tip-produced gradient itself (sign ignored;
    /// confinement fixes it).
    pub fn from_tip_gradient(
        gradient: f64,
        stray_gradient: f64,
        constants: &PhysicalConstants,
    ) -> Result<Self> {
        if !gradient.is_finite() {
            return Err(Error::InvalidTrap("tip gradient must be finite".into()));
        }
        Ok(Self {
            axial_frequency: axial_frequency_for_gradient(gradient, constants),
            stray_gradient,
        })
    }

    pub fn axial_frequency(&self) -> f64 {
        self.axial_frequency
    }

    pub fn stray_gradient(&self) -> f64 {
        self.stray_gradient
    }

    /// Tip-produced dE_z/dz (what a frequency calibration reports), V/m^2.
    pub fn tip_gradient(&self, constants: &PhysicalConstants) -> f64 {
        field_gradient(self.axial_frequency, constants)
    }

    /// Tip plus stray gradient: the external gradient entering the shift
    /// budget (before the neighbor-ion doubling).
    pub fn external_gradient(&self, constants: &PhysicalConstants) -> f64 {
        self.tip_gradient(constants) + self.stray_gradient
    }

    pub fn ion_separation(&self, constants: &PhysicalConstants) -> Result<f64> {
        ion_separation(self.axial_frequency, constants)
    }
}
