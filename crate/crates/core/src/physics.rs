//! Zeeman sublevels, field geometry, and single-level shifts.
//!
//! Angular momenta are carried as doubled integers (2j, 2m) so half-integer
//! bookkeeping stays exact; conversion to floats happens only when a shift is
//! actually evaluated. All shifts are angular frequencies in rad/s.

use serde::Serialize;

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};

/// One Zeeman sublevel |j, m>, stored as (2j, 2m).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct ZeemanLevel {
    j2: i32,
    m2: i32,
}

impl ZeemanLevel {
    /// Build from doubled quantum numbers; rejects |m| > j and mixed parity
    /// (2j and 2m must be both even or both odd).
    pub fn new(j2: i32, m2: i32) -> Result<Self> {
        if j2 < 0 || m2.abs() > j2 || (j2 - m2).rem_euclid(2) != 0 {
            return Err(Error::InvalidLevel { j2, m2 });
        }
        Ok(Self { j2, m2 })
    }

    /// Sublevel of the D_{5/2} manifold; `m2` is 2m.
    pub fn d52(m2: i32) -> Result<Self> {
        Self::new(5, m2)
    }

    pub fn j2(&self) -> i32 {
        self.j2
    }

    pub fn m2(&self) -> i32 {
        self.m2
    }

    pub fn j(&self) -> f64 {
        f64::from(self.j2) / 2.0
    }

    pub fn m(&self) -> f64 {
        f64::from(self.m2) / 2.0
    }
}

/// Orientation of the static magnetic field relative to the electric-field-
/// gradient symmetry axis.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FieldGeometry {
    /// Angle between field and symmetry axis, rad.
    pub beta: f64,
    /// Gradient asymmetry parameter; 0 for a rotationally symmetric gradient.
    pub epsilon: f64,
    /// Azimuthal angle of the field around the symmetry axis, rad.
    pub alpha: f64,
}

impl FieldGeometry {
    /// Rotationally symmetric gradient tilted by `beta`.
    pub fn symmetric(beta: f64) -> Self {
        Self {
            beta,
            epsilon: 0.0,
            alpha: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.alpha.is_finite()) {
            return Err(Error::InvalidGeometry("angles must be finite".into()));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "epsilon = {} must be nonnegative",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Static magnetic environment: uniform bias plus a linear axial gradient,
/// and the calibrated coefficient of the quadratic shift.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MagneticEnvironment {
    /// Bias field B0 at the first ion, T.
    pub bias_field: f64,
    /// Axial gradient dB/dz, T/m (field at the second ion is B0 + B' d).
    pub axial_gradient: f64,
    /// Second-order shift coefficient c2, Hz/T^2; the shift is c2 B0^2.
    pub second_order_coeff: f64,
    /// RMS of quasi-static field fluctuations, T.
    pub noise_rms: f64,
}

impl MagneticEnvironment {
    /// Quiet environment: bias only, no gradient, no quadratic shift.
    pub fn bias_only(bias_field: f64) -> Self {
        Self {
            bias_field,
            axial_gradient: 0.0,
            second_order_coeff: 0.0,
            noise_rms: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("bias_field", self.bias_field),
            ("axial_gradient", self.axial_gradient),
            ("second_order_coeff", self.second_order_coeff),
            ("noise_rms", self.noise_rms),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidGeometry(format!("{name} must be finite")));
            }
        }
        if self.bias_field < 0.0 || self.noise_rms < 0.0 {
            return Err(Error::InvalidGeometry(
                "bias_field and noise_rms must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Geometric factor [j(j+1) - 3 m^2] / [j(2j - 1)] of the quadrupole shift.
///
/// With J = 2j, M = 2m this is the integer ratio [J(J+2) - 3M^2] / [2J(J-1)],
/// so the result is a single correctly rounded division. Errors for j = 0 and
/// j = 1/2, where the denominator vanishes.
pub fn quadrupole_geometric_factor(level: ZeemanLevel) -> Result<f64> {
    let (num, den) = quadrupole_factor_ratio(level)?;
    Ok(num as f64 / den as f64)
}

/// Exact integer numerator/denominator of the geometric factor; shared with the
/// state-level budget so sums over kets cancel exactly.
pub(crate) fn quadrupole_factor_ratio(level: ZeemanLevel) -> Result<(i64, i64)> {
    let j2 = i64::from(level.j2);
    let m2 = i64::from(level.m2);
    let den = 2 * j2 * (j2 - 1);
    if den == 0 {
        return Err(Error::DegenerateManifold { j2: level.j2 });
    }
    Ok((j2 * (j2 + 2) - 3 * m2 * m2, den))
}

/// Orientation factor (3 cos^2 beta - 1) - epsilon sin^2 beta cos(2 alpha).
///
/// Reduces to the familiar 3 cos^2 beta - 1 for a symmetric gradient and to
/// exactly 2 at beta = 0 regardless of epsilon and alpha.
pub fn angular_factor(geometry: &FieldGeometry) -> f64 {
    let (s, c) = geometry.beta.sin_cos();
    3.0 * c * c - 1.0 - geometry.epsilon * s * s * (2.0 * geometry.alpha).cos()
}

/// Electric-quadrupole shift of one sublevel, rad/s:
/// gradient * theta * f(j, m) * F(beta, epsilon, alpha) / (4 hbar),
/// with `gradient` = dE_z/dz at the ion in V/m^2 and `theta` in C m^2.
pub fn quadrupole_shift(
    level: ZeemanLevel,
    gradient: f64,
    geometry: &FieldGeometry,
    theta: f64,
    constants: &PhysicalConstants,
) -> Result<f64> {
    Ok(
        gradient * theta * quadrupole_geometric_factor(level)? * angular_factor(geometry)
            / (4.0 * constants.hbar),
    )
}

/// First-order Zeeman shift m g mu_B B / hbar, rad/s.
pub fn zeeman_shift_first_order(
    level: ZeemanLevel,
    field: f64,
    constants: &PhysicalConstants,
) -> f64 {
    level.m() * constants.lande_g * constants.bohr_magneton * field / constants.hbar
}
