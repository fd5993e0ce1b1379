//! Coulomb interaction of ions in neighbouring wells: image screening above
//! the ground plane, the small-displacement closed form, a full equilibrium
//! solver and charge-to-mass fitting from axial frequencies.

mod equilibrium;
mod qm_fit;

pub use equilibrium::{
    n_ion_equilibrium, two_ion_equilibrium, Confinement, CoulombModel, EquilibriumOptions, EquilibriumResult, PairForce,
    MAX_IONS,
};
pub use qm_fit::{fit_charge_to_mass, ChargeToMassFit};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics::{DriveConfig, IonSpecies};
use crate::error::{Error, Result};
use crate::units::EPSILON_0;

/// Screening constant quoted for an ion 0.25 mm above an infinite plane.
pub const QUOTED_SCREENING: f64 = 3.0;
/// Largest `x1 / d` accepted by the closed form.
pub const CLOSED_FORM_LIMIT: f64 = 0.2;

/// `1 / (1 - d^3 / (d^2 + 4 h^2)^{3/2})`: unscreened over net lateral force
/// between two equal charges at height `h` above a grounded plane.
pub fn screening_factor_image(height: f64, d: f64) -> Result<f64> {
    if !(height > 0.0 && height.is_finite()) {
        return Err(Error::InvalidParameter(format!("height must be positive, got {height}")));
    }
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::InvalidParameter(format!("separation must be positive, got {d}")));
    }
    let ratio = (d / (d * d + 4.0 * height * height).sqrt()).powi(3);
    Ok(1.0 / (1.0 - ratio))
}

/// How the screening factor of a pair is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Screening {
    #[default]
    Image,
    /// The quoted constant 3.
    Quoted,
    Fixed(f64),
}

/// Two ions in adjacent wells `d` apart, at `height` above the ground plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IonPair {
    pub ion1: IonSpecies,
    pub ion2: IonSpecies,
    pub d: f64,
    pub height: f64,
    pub s: f64,
}

impl IonPair {
    pub fn new(ion1: IonSpecies, ion2: IonSpecies, d: f64, height: f64, screening: Screening) -> Result<Self> {
        ion1.validated()?;
        ion2.validated()?;
        let s = match screening {
            Screening::Image => screening_factor_image(height, d)?,
            Screening::Quoted => QUOTED_SCREENING,
            Screening::Fixed(s) => s,
        };
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidParameter(format!("separation must be positive, got {d}")));
        }
        if !(s >= 1.0 && s.is_finite()) {
            return Err(Error::InvalidParameter(format!("screening factor must be >= 1, got {s}")));
        }
        Ok(Self { ion1, ion2, d, height, s })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisplacementMethod {
    ClosedForm,
    Equilibrium,
}

/// Offsets from the well centres along the line joining them, positive away
/// from the other ion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplacementResult {
    pub x1: f64,
    pub x2: f64,
    pub method: DisplacementMethod,
}

/// `x1 = Omega^2 m1 r1^4 Q2 / (8 pi eps0 V^2 Q1 s d^2)`, and `x2` with indices swapped.
pub fn two_ion_displacement_closed(pair: &IonPair, drive: &DriveConfig, r1: f64) -> Result<DisplacementResult> {
    drive.validated()?;
    if !(r1 > 0.0 && r1.is_finite()) {
        return Err(Error::InvalidParameter(format!("r1 must be positive, got {r1}")));
    }
    let common = drive.omega * drive.omega * r1.powi(4)
        / (8.0 * std::f64::consts::PI * EPSILON_0 * drive.v_rf * drive.v_rf * pair.s * pair.d * pair.d);
    let x1 = common * pair.ion1.mass * pair.ion2.charge / pair.ion1.charge;
    let x2 = common * pair.ion2.mass * pair.ion1.charge / pair.ion2.charge;
    for x in [x1, x2] {
        let ratio = x.abs() / pair.d;
        if ratio > CLOSED_FORM_LIMIT {
            return Err(Error::Regime { ratio, limit: CLOSED_FORM_LIMIT });
        }
    }
    Ok(DisplacementResult { x1, x2, method: DisplacementMethod::ClosedForm })
}

pub const REPULSION_CSV_HEADER: &str = "Omega,x1,x2,s,method";

/// One row per drive frequency (rad/s).
pub fn write_repulsion_csv<W: Write>(mut w: W, rows: &[(f64, DisplacementResult)], s: f64) -> Result<()> {
    writeln!(w, "{REPULSION_CSV_HEADER}")?;
    for (omega, r) in rows {
        let method = match r.method {
            DisplacementMethod::ClosedForm => "closed_form",
            DisplacementMethod::Equilibrium => "equilibrium",
        };
        writeln!(w, "{omega:e},{:e},{:e},{s:e},{method}", r.x1, r.x2)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{e_per_amu_to_si, hz_to_angular, ELEMENTARY_CHARGE};
    use approx::assert_relative_eq;

    fn macro_pair(q2_over_q1: f64) -> IonPair {
        let m = IonSpecies::macroion_default().mass;
        let q = e_per_amu_to_si(1.9e-9) * m;
        let a = IonSpecies::new(q, m).unwrap();
        let b = IonSpecies::new(q * q2_over_q1, m).unwrap();
        IonPair::new(a, b, 1.64e-3, 0.25e-3, Screening::Image).unwrap()
    }

    #[test]
    fn image_screening_values() {
        assert!((screening_factor_image(0.25e-3, 1.64e-3).unwrap() - 8.0).abs() < 0.05);
        assert!(screening_factor_image(1e3, 1.64e-3).unwrap() - 1.0 < 1e-9);
        assert!(screening_factor_image(1e-9, 1.64e-3).unwrap() > 1e9);
        assert!(screening_factor_image(0.0, 1.0).is_err());
    }

    #[test]
    fn symmetric_pair_and_charge_ratio_law() {
        let drive = DriveConfig::new(350.0, hz_to_angular(2000.0)).unwrap();
        let r = two_ion_displacement_closed(&macro_pair(1.0), &drive, 3.1e-3).unwrap();
        assert_eq!(r.x1, r.x2);
        assert!(r.x1 > 0.0);
        let r = two_ion_displacement_closed(&macro_pair(3.0), &drive, 3.1e-3).unwrap();
        assert_relative_eq!(r.x1 / r.x2, 9.0, max_relative = 1e-14);
    }

    #[test]
    fn omega_squared_scaling() {
        let p = macro_pair(1.0);
        let a = two_ion_displacement_closed(&p, &DriveConfig::new(350.0, 1e4).unwrap(), 3.1e-3).unwrap();
        let b = two_ion_displacement_closed(&p, &DriveConfig::new(350.0, 3e4).unwrap(), 3.1e-3).unwrap();
        assert_relative_eq!(b.x1 / a.x1, 9.0, max_relative = 1e-14);
    }

    #[test]
    fn regime_violation() {
        let heavy = IonSpecies::new(ELEMENTARY_CHARGE, 1.0).unwrap();
        let p = IonPair::new(heavy, heavy, 1.64e-3, 0.25e-3, Screening::Quoted).unwrap();
        let r = two_ion_displacement_closed(&p, &DriveConfig::new(10.0, 1e4).unwrap(), 3.1e-3);
        assert!(matches!(r, Err(Error::Regime { .. })));
    }

    #[test]
    fn pair_validation() {
        let i = IonSpecies::strontium88();
        assert!(IonPair::new(i, i, 1e-3, 1e-3, Screening::Fixed(0.5)).is_err());
        assert_eq!(IonPair::new(i, i, 1e-3, 1e-3, Screening::Quoted).unwrap().s, 3.0);
    }
}
