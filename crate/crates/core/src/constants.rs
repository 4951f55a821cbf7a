//! Physical constants, SI units throughout.
//!
//! Every computation in this crate takes a [`PhysicalConstants`] handle instead
//! of reading globals, so tests can inject altered values and sensitivity
//! studies stay honest. The defaults are CODATA 2018 (exact where the SI
//! definition fixes them).

use serde::Serialize;

use crate::error::{Error, Result};

/// Planck constant h, J s (exact).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant, J s.
pub const HBAR: f64 = PLANCK / (2.0 * std::f64::consts::PI);
/// Bohr magneton, J/T.
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
/// Elementary charge, C (exact).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Bohr radius, m.
pub const BOHR_RADIUS: f64 = 5.291_772_109_03e-11;
/// Coulomb constant 1/(4 pi eps0), N m^2/C^2.
const COULOMB_CONSTANT: f64 = 8.987_551_787_368_176e9;
/// e^2/(4 pi eps0), J m — the Coulomb repulsion scale between two ions.
pub const COULOMB_E2: f64 = ELEMENTARY_CHARGE * ELEMENTARY_CHARGE * COULOMB_CONSTANT;
/// Mass of a single 40Ca+ ion, kg (neutral atomic mass minus one electron).
pub const CA40_ION_MASS: f64 = 6.635_853_2e-26;
/// Lande g-factor of the 3d 2D_{5/2} manifold.
pub const LANDE_G_D52: f64 = 1.2;

/// Constants handle threaded through the physics, trap, and estimation code.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PhysicalConstants {
    /// Planck constant h, J s.
    pub planck: f64,
    /// Reduced Planck constant hbar, J s.
    pub hbar: f64,
    /// Bohr magneton, J/T.
    pub bohr_magneton: f64,
    /// Elementary charge, C.
    pub elementary_charge: f64,
    /// Bohr radius, m.
    pub bohr_radius: f64,
    /// e^2/(4 pi eps0), J m.
    pub coulomb_e2: f64,
    /// Ion mass, kg.
    pub ion_mass: f64,
    /// Lande g-factor of the metastable manifold carrying the qubit.
    pub lande_g: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            planck: PLANCK,
            hbar: HBAR,
            bohr_magneton: BOHR_MAGNETON,
            elementary_charge: ELEMENTARY_CHARGE,
            bohr_radius: BOHR_RADIUS,
            coulomb_e2: COULOMB_E2,
            ion_mass: CA40_ION_MASS,
            lande_g: LANDE_G_D52,
        }
    }
}

impl PhysicalConstants {
    /// CODATA defaults for a two-ion 40Ca+ crystal.
    pub fn codata() -> Self {
        Self::default()
    }

    /// Same constants with a different ion mass (isotope studies).
    pub fn with_ion_mass(self, ion_mass: f64) -> Self {
        Self { ion_mass, ..self }
    }

    /// Check internal consistency: all entries positive and finite, hbar
    /// consistent with h, and the D_{5/2} g-factor at its LS-coupling value.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("planck", self.planck),
            ("hbar", self.hbar),
            ("bohr_magneton", self.bohr_magneton),
            ("elementary_charge", self.elementary_charge),
            ("bohr_radius", self.bohr_radius),
            ("coulomb_e2", self.coulomb_e2),
            ("ion_mass", self.ion_mass),
            ("lande_g", self.lande_g),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidConstants(format!(
                    "{name} = {value} must be positive and finite"
                )));
            }
        }
        let hbar_expected = self.planck / (2.0 * std::f64::consts::PI);
        if (self.hbar - hbar_expected).abs() > 1e-12 * hbar_expected {
            return Err(Error::InvalidConstants(format!(
                "hbar = {} inconsistent with h/(2 pi) = {hbar_expected}",
                self.hbar
            )));
        }
        if (self.lande_g - 1.2).abs() > 1e-12 * 1.2 {
            return Err(Error::InvalidConstants(format!(
                "lande_g = {} but the D_5/2 manifold requires 6/5",
                self.lande_g
            )));
        }
        Ok(())
    }

    /// One atomic quadrupole-moment unit e a0^2, in C m^2.
    pub fn atomic_quadrupole_unit(&self) -> f64 {
        self.elementary_charge * self.bohr_radius * self.bohr_radius
    }
}
