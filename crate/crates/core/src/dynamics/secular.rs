use serde::{Deserialize, Serialize};

use super::{DriveConfig, IonSpecies};
use crate::error::{Error, Result};

/// Numerator of the top-plate correction to `omega_z^2`, over 64.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasCoefficient {
    /// 144/64, the published value.
    #[default]
    AsPrinted,
    /// 72/64, from expanding the on-axis pseudopotential to cubic order
    /// around the shifted minimum.
    Derived,
}

impl BiasCoefficient {
    pub fn value(self) -> f64 {
        match self {
            Self::AsPrinted => 144.0 / 64.0,
            Self::Derived => 72.0 / 64.0,
        }
    }
}

fn check_length(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

/// `Q V / (m Omega r1^2)` in rad/s.
fn base_rate(ion: &IonSpecies, drive: &DriveConfig, r1: f64) -> f64 {
    ion.charge * drive.v_rf / (ion.mass * drive.omega * r1 * r1)
}

/// `(omega_r, omega_z)` in rad/s for the pure quadrupole term; `omega_z = 2 omega_r`.
pub fn secular_frequencies(ion: &IonSpecies, drive: &DriveConfig, r1: f64) -> Result<(f64, f64)> {
    check_length("r1", r1)?;
    let w = base_rate(ion, drive, r1).abs();
    let omega_r = 2f64.sqrt() * w;
    Ok((omega_r, 2.0 * omega_r))
}

/// Axial frequency with the top-plate bias `drive.u_top`, using the published coefficient.
pub fn omega_z_biased(ion: &IonSpecies, drive: &DriveConfig, r1: f64, alpha: f64, z1: f64) -> Result<f64> {
    omega_z_biased_with(ion, drive, r1, alpha, z1, BiasCoefficient::AsPrinted)
}

/// `omega_z^2 = 8 (Q V / (m Omega r1^2))^2 (1 - c alpha m Omega^2 r1^3 U / (Q V^2 z1))`.
pub fn omega_z_biased_with(
    ion: &IonSpecies,
    drive: &DriveConfig,
    r1: f64,
    alpha: f64,
    z1: f64,
    coefficient: BiasCoefficient,
) -> Result<f64> {
    check_length("r1", r1)?;
    check_length("z1", z1)?;
    let bracket = bias_bracket(ion, drive, r1, alpha, z1, coefficient);
    if !(bracket > 0.0) {
        return Err(Error::AntiTrapping { bracket });
    }
    let w = base_rate(ion, drive, r1);
    Ok((8.0 * w * w * bracket).sqrt())
}

/// The dimensionless factor multiplying the unbiased `omega_z^2`.
pub fn bias_bracket(
    ion: &IonSpecies,
    drive: &DriveConfig,
    r1: f64,
    alpha: f64,
    z1: f64,
    coefficient: BiasCoefficient,
) -> f64 {
    let v2 = drive.v_rf * drive.v_rf;
    1.0 - coefficient.value() * alpha * ion.mass * drive.omega * drive.omega * r1.powi(3) * drive.u_top
        / (ion.charge * v2 * z1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::angular_to_hz;
    use approx::assert_relative_eq;

    #[test]
    fn ratio_is_exactly_two() {
        let (wr, wz) = secular_frequencies(&IonSpecies::strontium88(), &DriveConfig::reference(), 3.1e-3).unwrap();
        assert_eq!(wz, 2.0 * wr);
        assert!((angular_to_hz(wr) - 159e3).abs() < 1e3, "{}", angular_to_hz(wr));
    }

    #[test]
    fn linear_in_voltage() {
        let ion = IonSpecies::strontium88();
        let d = DriveConfig::reference();
        let mut d2 = d;
        d2.v_rf *= 2.0;
        let (a, _) = secular_frequencies(&ion, &d, 3.1e-3).unwrap();
        let (b, _) = secular_frequencies(&ion, &d2, 3.1e-3).unwrap();
        assert_relative_eq!(b, 2.0 * a, max_relative = 1e-15);
    }

    #[test]
    fn bias_reduces_to_unbiased_and_raises_for_negative_alpha() {
        let ion = IonSpecies::strontium88();
        let d = DriveConfig::reference();
        let (_, wz) = secular_frequencies(&ion, &d, 3.1e-3).unwrap();
        assert_relative_eq!(omega_z_biased(&ion, &d, 3.1e-3, -4.0, 0.019).unwrap(), wz, max_relative = 1e-15);
        let biased = d.with_top_bias(5.0);
        for c in [BiasCoefficient::AsPrinted, BiasCoefficient::Derived] {
            assert!(omega_z_biased_with(&ion, &biased, 3.1e-3, -4.0, 0.019, c).unwrap() > wz);
        }
    }

    #[test]
    fn anti_trapping() {
        let ion = IonSpecies::strontium88();
        let d = DriveConfig::reference().with_top_bias(-1e4);
        assert!(matches!(omega_z_biased(&ion, &d, 3.1e-3, -4.0, 0.019), Err(Error::AntiTrapping { .. })));
    }
}
