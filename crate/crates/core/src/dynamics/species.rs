use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{e_per_amu_to_si, hz_to_angular, AMU, ELEMENTARY_CHARGE, SR88_ION_MASS_AMU};

pub const MACROION_DIAMETER: f64 = 0.44e-6;
/// kg/m^3
pub const POLYSTYRENE_DENSITY: f64 = 1050.0;
/// e/amu
pub const MACROION_Q_OVER_M: f64 = 1.9e-9;

/// A trapped particle: charge in C, mass in kg, velocity damping rate in 1/s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IonSpecies {
    pub charge: f64,
    pub mass: f64,
    #[serde(default)]
    pub drag_gamma: f64,
}

impl IonSpecies {
    pub fn new(charge: f64, mass: f64) -> Result<Self> {
        Self { charge, mass, drag_gamma: 0.0 }.validated()
    }

    /// Charge in units of e, mass in amu.
    pub fn from_e_amu(charge_e: f64, mass_amu: f64) -> Result<Self> {
        Self::new(charge_e * ELEMENTARY_CHARGE, mass_amu * AMU)
    }

    /// Singly charged 88Sr+.
    pub fn strontium88() -> Self {
        Self { charge: ELEMENTARY_CHARGE, mass: SR88_ION_MASS_AMU * AMU, drag_gamma: 0.0 }
    }

    /// Polystyrene sphere of `diameter` (m) and `density` (kg/m^3) carrying
    /// `q_over_m` in e/amu.
    pub fn macroion(diameter: f64, density: f64, q_over_m: f64) -> Result<Self> {
        let mass = density * std::f64::consts::PI / 6.0 * diameter.powi(3);
        Self::new(e_per_amu_to_si(q_over_m) * mass, mass)
    }

    /// Single 0.44 um sphere at 1050 kg/m^3 and 1.9e-9 e/amu.
    pub fn macroion_default() -> Self {
        Self::macroion(MACROION_DIAMETER, POLYSTYRENE_DENSITY, MACROION_Q_OVER_M).expect("valid constants")
    }

    pub fn with_drag(mut self, gamma: f64) -> Result<Self> {
        self.drag_gamma = gamma;
        self.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.charge != 0.0 && self.charge.is_finite()) {
            return Err(Error::InvalidParameter(format!("ion charge must be non-zero, got {}", self.charge)));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::InvalidParameter(format!("ion mass must be positive, got {}", self.mass)));
        }
        if !(self.drag_gamma >= 0.0 && self.drag_gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("drag rate must be >= 0, got {}", self.drag_gamma)));
        }
        Ok(self)
    }

    pub fn charge_to_mass(&self) -> f64 {
        self.charge / self.mass
    }
}

/// rf amplitude `v_rf` (V), drive angular frequency `omega` (rad/s), endcap
/// dc `u0` (V) and top-plate dc bias `u_top` (V).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    pub v_rf: f64,
    pub omega: f64,
    #[serde(default)]
    pub u0: f64,
    #[serde(default)]
    pub u_top: f64,
}

impl DriveConfig {
    pub fn new(v_rf: f64, omega: f64) -> Result<Self> {
        Self { v_rf, omega, u0: 0.0, u_top: 0.0 }.validated()
    }

    /// 300 V at 7.7 MHz, no dc.
    pub fn reference() -> Self {
        Self { v_rf: 300.0, omega: hz_to_angular(7.7e6), u0: 0.0, u_top: 0.0 }
    }

    pub fn with_top_bias(mut self, u: f64) -> Self {
        self.u_top = u;
        self
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::InvalidParameter(format!("drive frequency must be positive, got {}", self.omega)));
        }
        if !(self.v_rf >= 0.0 && self.v_rf.is_finite()) {
            return Err(Error::InvalidParameter(format!("rf amplitude must be >= 0, got {}", self.v_rf)));
        }
        if !(self.u0.is_finite() && self.u_top.is_finite()) {
            return Err(Error::InvalidParameter("dc voltages must be finite".into()));
        }
        Ok(self)
    }
}
