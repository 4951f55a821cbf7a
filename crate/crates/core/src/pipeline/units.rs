//! Strict parsing of unit-suffixed quantities from configuration files.
//!
//! Every physical quantity in a run configuration is written as the string
//! "VALUE UNIT" (one space or more between). The unit must come from the
//! dimension's table below; bare numbers, unknown suffixes, and
//! wrong-dimension suffixes are all hard errors. Unit bugs are the dominant
//! failure mode in this domain, so nothing is guessed.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// A physical dimension with its accepted suffixes and SI conversion factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    /// Hz, kHz, MHz -> Hz
    Frequency,
    /// V, kV -> V
    Voltage,
    /// T, G, mG, uG -> T
    MagneticField,
    /// T/m, G/m, mG/mm -> T/m
    MagneticGradient,
    /// Vmm2 (= V/mm^2), V/mm2, V/m2 -> V/m^2
    ElectricGradient,
    /// s, ms, us -> s
    Time,
    /// rad, mrad, deg -> rad
    Angle,
    /// ea02 (atomic unit e*a0^2) -> e*a0^2; SI conversion happens downstream
    QuadrupoleMoment,
    /// Hz/T2, HzG2, Hz/G2 -> Hz/T^2
    PerFieldSquared,
    /// Hzmm2/V, Hzm2/V -> Hz mm^2/V (the laboratory slope unit)
    ShiftSlope,
}

impl Dimension {
    fn table(self) -> &'static [(&'static str, f64)] {
        match self {
            Dimension::Frequency => &[("Hz", 1.0), ("kHz", 1e3), ("MHz", 1e6)],
            Dimension::Voltage => &[("V", 1.0), ("kV", 1e3)],
            Dimension::MagneticField => &[("T", 1.0), ("G", 1e-4), ("mG", 1e-7), ("uG", 1e-10)],
            Dimension::MagneticGradient => {
                &[("T/m", 1.0), ("G/m", 1e-4), ("mG/mm", 1e-4), ("G/cm", 1e-2)]
            }
            Dimension::ElectricGradient => &[("Vmm2", 1e6), ("V/mm2", 1e6), ("V/m2", 1.0)],
            Dimension::Time => &[("s", 1.0), ("ms", 1e-3), ("us", 1e-6)],
            Dimension::Angle => &[("rad", 1.0), ("mrad", 1e-3), ("deg", PI / 180.0)],
            Dimension::QuadrupoleMoment => &[("ea02", 1.0)],
            Dimension::PerFieldSquared => &[("Hz/T2", 1.0), ("HzG2", 1e8), ("Hz/G2", 1e8)],
            Dimension::ShiftSlope => &[("Hzmm2/V", 1.0), ("Hzm2/V", 1e6)],
        }
    }

    fn name(self) -> &'static str {
        match self {
            Dimension::Frequency => "frequency",
            Dimension::Voltage => "voltage",
            Dimension::MagneticField => "magnetic field",
            Dimension::MagneticGradient => "magnetic field gradient",
            Dimension::ElectricGradient => "electric field gradient",
            Dimension::Time => "time",
            Dimension::Angle => "angle",
            Dimension::QuadrupoleMoment => "quadrupole moment",
            Dimension::PerFieldSquared => "second-order coefficient",
            Dimension::ShiftSlope => "shift-versus-gradient slope",
        }
    }
}

/// Parse "VALUE UNIT" into the dimension's base unit (SI except where noted
/// on [`Dimension`]). `context` names the offending key in error messages.
pub fn parse_quantity(text: &str, dimension: Dimension, context: &str) -> Result<f64> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let [value_text, unit] = tokens.as_slice() else {
        return Err(Error::Config(format!(
            "{context}: expected \"VALUE UNIT\", got {text:?}"
        )));
    };
    let value: f64 = value_text
        .parse()
        .map_err(|_| Error::Config(format!("{context}: {value_text:?} is not a number")))?;
    if !value.is_finite() {
        return Err(Error::Config(format!("{context}: value must be finite")));
    }
    let Some(&(_, factor)) = dimension.table().iter().find(|(u, _)| *u == *unit) else {
        let accepted: Vec<&str> = dimension.table().iter().map(|(u, _)| *u).collect();
        return Err(Error::Config(format!(
            "{context}: unit {unit:?} is not a {} unit (accepted: {})",
            dimension.name(),
            accepted.join(", ")
        )));
    };
    Ok(value * factor)
}

/// Parse an optional quantity, passing `None` through.
pub fn parse_optional(
    text: Option<&String>,
    dimension: Dimension,
    context: &str,
) -> Result<Option<f64>> {
    text.map(|t| parse_quantity(t, dimension, context))
        .transpose()
}

/// Format a value back into "VALUE UNIT" using the dimension's first (base)
/// suffix; used when echoing derived quantities into reports.
pub fn format_quantity(value: f64, dimension: Dimension) -> String {
    let (unit, factor) = dimension.table()[0];
    format!("{} {}", value / factor, unit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn si_conversions() {
        let cases = [
            ("850 kHz", Dimension::Frequency, 850e3),
            ("1.5 MHz", Dimension::Frequency, 1.5e6),
            ("750 V", Dimension::Voltage, 750.0),
            ("2.9 G", Dimension::MagneticField, 2.9e-4),
            ("12 mG", Dimension::MagneticField, 1.2e-6),
            ("-0.0774 G/m", Dimension::MagneticGradient, -7.74e-6),
            ("11.8 Vmm2", Dimension::ElectricGradient, 1.18e7),
            ("-0.168 V/mm2", Dimension::ElectricGradient, -1.68e5),
            ("300 ms", Dimension::Time, 0.3),
            ("90 deg", Dimension::Angle, PI / 2.0),
            ("1.83 ea02", Dimension::QuadrupoleMoment, 1.83),
            ("-0.343 Hz/G2", Dimension::PerFieldSquared, -3.43e7),
            ("2.975 Hzmm2/V", Dimension::ShiftSlope, 2.975),
        ];
        for (text, dim, expect) in cases {
            let got = parse_quantity(text, dim, "test").unwrap();
            assert_relative_eq!(got, expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn bare_number_rejected() {
        assert!(parse_quantity("750", Dimension::Voltage, "trap.voltage").is_err());
    }

    #[test]
    fn wrong_dimension_rejected() {
        let err = parse_quantity("5 ms", Dimension::Voltage, "trap.voltage").unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("trap.voltage") && msg.contains("voltage unit"),
            "{msg}"
        );
    }

    #[test]
    fn unknown_unit_rejected() {
        assert!(parse_quantity("5 furlong", Dimension::Time, "t").is_err());
    }

    #[test]
    fn garbage_value_rejected() {
        assert!(parse_quantity("fast Hz", Dimension::Frequency, "f").is_err());
        assert!(parse_quantity("inf Hz", Dimension::Frequency, "f").is_err());
        assert!(parse_quantity("1 2 Hz", Dimension::Frequency, "f").is_err());
    }

    #[test]
    fn case_sensitive_units() {
        // mHz would be millihertz, which no table admits; MHz is fine.
        assert!(parse_quantity("3 mHz", Dimension::Frequency, "f").is_err());
        assert!(parse_quantity("3 MHZ", Dimension::Frequency, "f").is_err());
    }

    #[test]
    fn format_round_trips_base_unit() {
        let s = format_quantity(1.18e7, Dimension::ElectricGradient);
        assert_eq!(s, "11.8 Vmm2");
        let back = parse_quantity(&s, Dimension::ElectricGradient, "t").unwrap();
        assert_relative_eq!(back, 1.18e7, max_relative = 1e-12);
    }
}
