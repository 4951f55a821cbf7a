//! Two-ion Bell-state specifications and their phase-evolution budgets.
//!
//! A state (|m1>|m2> + e^{i phi0} |m3>|m4>)/sqrt(2) accumulates relative phase
//! at the rate lambda = [(E_m1 + E_m2) - (E_m3 + E_m4)] / hbar. When the two
//! branches share the same total magnetic quantum number the uniform-field
//! first-order Zeeman energy cancels identically and the state lives in a
//! decoherence-free subspace: only field *gradients*, the electric quadrupole
//! interaction, and the quadratic Zeeman shift move its phase.

use serde::Serialize;

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::physics::{self, FieldGeometry, MagneticEnvironment, ZeemanLevel};
use crate::trap::{self, TrapEnvironment};

/// Where the four kets live.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StateKind {
    /// All kets in one Zeeman manifold (the D_{5/2} case of interest).
    Zeeman,
    /// Ground/metastable mixed preparation state (|SD> +- |DS>); representable
    /// for bookkeeping, but outside the shift model.
    MixedSd,
}

/// Specification of a two-ion superposition (|m1>|m2> + e^{i phi0}|m3>|m4>)/sqrt(2).
///
/// m values are stored doubled (2m), branch-major: `m2 = [m1, m2, m3, m4]`
/// with the first two kets forming the upper branch.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BellStateSpec {
    kind: StateKind,
    /// Doubled manifold angular momentum 2j.
    j2: i32,
    /// Doubled magnetic quantum numbers of the four kets.
    m2: [i32; 4],
    /// Relative phase of the second branch at tau = 0, rad.
    phi0: f64,
    /// Preparation contrast C0 in [0, 1].
    contrast: f64,
}

impl BellStateSpec {
    /// Zeeman-manifold state from doubled m values; validates each ket.
    pub fn new(j2: i32, m2: [i32; 4], phi0: f64, contrast: f64) -> Result<Self> {
        for m in m2 {
            ZeemanLevel::new(j2, m)?;
        }
        if !phi0.is_finite() {
            return Err(Error::InvalidState("phi0 must be finite".into()));
        }
        if !(0.0..=1.0).contains(&contrast) {
            return Err(Error::InvalidState(format!(
                "contrast {contrast} outside [0, 1]"
            )));
        }
        Ok(Self {
            kind: StateKind::Zeeman,
            j2,
            m2,
            phi0,
            contrast,
        })
    }

    /// The product-state superposition (|-5/2>|+3/2> + |-1/2>|-1/2>)/sqrt(2)
    /// in D_{5/2}.
    pub fn psi1(contrast: f64, phi0: f64) -> Self {
        Self::new(5, [-5, 3, -1, -1], phi0, contrast).expect("valid by construction")
    }

    /// Same as [`psi1`](Self::psi1) with the ion roles swapped:
    /// (|+3/2>|-5/2> + |-1/2>|-1/2>)/sqrt(2).
    pub fn psi2(contrast: f64, phi0: f64) -> Self {
        Self::new(5, [3, -5, -1, -1], phi0, contrast).expect("valid by construction")
    }

    /// Mixed ground/metastable preparation state with all D kets at m = -1/2.
    pub fn mixed_sd(phi0: f64, contrast: f64) -> Self {
        Self {
            kind: StateKind::MixedSd,
            j2: 5,
            m2: [-1, -1, -1, -1],
            phi0,
            contrast,
        }
    }

    pub fn kind(&self) -> StateKind {
        self.kind
    }

    pub fn j2(&self) -> i32 {
        self.j2
    }

    pub fn m2(&self) -> [i32; 4] {
        self.m2
    }

    pub fn phi0(&self) -> f64 {
        self.phi0
    }

    pub fn contrast(&self) -> f64 {
        self.contrast
    }

    /// Doubled branch imbalance 2[(m1 + m2) - (m3 + m4)]; exact integer.
    pub fn imbalance_m2(&self) -> i32 {
        self.m2[0] + self.m2[1] - self.m2[2] - self.m2[3]
    }

    /// Doubled second-ion imbalance 2(m2 - m4), the weight of the
    /// field-gradient term.
    pub fn gradient_weight_m2(&self) -> i32 {
        self.m2[1] - self.m2[3]
    }

    /// True when both branches carry the same total m, so the uniform-field
    /// first-order Zeeman phase cancels identically.
    pub fn is_decoherence_free(&self) -> bool {
        self.imbalance_m2() == 0
    }

    /// First-order sensitivity of the phase rate to the uniform bias field,
    /// d lambda / d B0 in rad/(s T). Exactly zero for decoherence-free states.
    pub fn field_sensitivity(&self, constants: &PhysicalConstants) -> f64 {
        f64::from(self.imbalance_m2()) / 2.0 * constants.lande_g * constants.bohr_magneton
            / constants.hbar
    }
}

/// Phase-rate budget of a Bell state, rad/s, split by mechanism.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StateShiftBudget {
    /// Electric-quadrupole part, both ions, neighbor-doubled gradient.
    pub quadrupole: f64,
    /// First-order Zeeman part: uniform-bias term (zero for DFS states) plus
    /// the field-gradient term over the ion separation.
    pub zeeman_gradient: f64,
    /// Quadratic Zeeman part 2 pi c2 B0^2 with the state-level calibrated c2.
    pub zeeman_second_order: f64,
    /// Sum of the three components.
    pub total: f64,
}

/// Full phase-evolution rate of a Bell state at one trap operating point.
///
/// `theta` is the quadrupole moment in C m^2 and `ion_separation` the crystal
/// spacing in m (ion 1 sits at the bias field B0, ion 2 at B0 + B' d). The
/// quadrupole part combines the four geometric factors as one exact integer
/// ratio before scaling, so branch cancellations hold to the last bit.
pub fn phase_rate(
    spec: &BellStateSpec,
    trap: &TrapEnvironment,
    env: &MagneticEnvironment,
    geometry: &FieldGeometry,
    theta: f64,
    ion_separation: f64,
    constants: &PhysicalConstants,
) -> Result<StateShiftBudget> {
    if spec.kind() != StateKind::Zeeman {
        return Err(Error::BudgetUndefined);
    }

    // Quadrupole: prefactor * sum_i +-f(j, m_i), the signed sum taken exactly.
    let mut num = 0i64;
    let mut den = 1i64;
    for (i, m2) in spec.m2().into_iter().enumerate() {
        let level = ZeemanLevel::new(spec.j2(), m2)?;
        let (n, d) = physics::quadrupole_factor_ratio(level)?;
        num += if i < 2 { n } else { -n };
        den = d; // common to all kets of one manifold
    }
    let gradient_at_ion = trap::gradient_at_ion(trap.external_gradient(constants));
    let prefactor =
        gradient_at_ion * theta * physics::angular_factor(geometry) / (4.0 * constants.hbar);
    let quadrupole = prefactor * (num as f64 / den as f64);

    // First-order Zeeman: (g mu_B/hbar) [dm_sum B0 + dm_ion2 B' d]; the
    // integer imbalance keeps the bias term exactly zero for DFS states.
    let gmu = constants.lande_g * constants.bohr_magneton / constants.hbar;
    let dm_sum = f64::from(spec.imbalance_m2()) / 2.0;
    let dm_ion2 = f64::from(spec.gradient_weight_m2()) / 2.0;
    let zeeman_gradient =
        gmu * (dm_sum * env.bias_field + dm_ion2 * env.axial_gradient * ion_separation);

    let zeeman_second_order =
        2.0 * std::f64::consts::PI * env.second_order_coeff * env.bias_field * env.bias_field;

    Ok(StateShiftBudget {
        quadrupole,
        zeeman_gradient,
        zeeman_second_order,
        total: quadrupole + zeeman_gradient + zeeman_second_order,
    })
}

/// Split two measured rates into their common part and half-difference:
/// ((d1 + d2)/2, |d1 - d2|/2). The common part is what both states share
/// (quadrupole plus quadratic Zeeman); the half-difference isolates the
/// magnetic-field-gradient term, which flips sign under the ion swap.
pub fn decompose_average_difference(delta1: f64, delta2: f64) -> (f64, f64) {
    ((delta1 + delta2) / 2.0, (delta1 - delta2).abs() / 2.0)
}
