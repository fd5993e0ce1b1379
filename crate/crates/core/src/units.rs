//! Physical constants (CODATA 2018, SI) and unit conversions.

use std::f64::consts::PI;

/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Unified atomic mass unit, kg.
pub const AMU: f64 = 1.660_539_066_60e-27;
/// Vacuum permittivity, F/m.
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
/// Planck constant, J s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant, J s.
pub const HBAR: f64 = PLANCK / (2.0 * PI);

/// Mass of a singly ionized 88Sr atom in amu (neutral atomic mass minus one electron).
pub const SR88_ION_MASS_AMU: f64 = 87.905_064;

/// Coulomb constant 1/(4 pi eps0), N m^2 / C^2.
pub fn coulomb_constant() -> f64 {
    1.0 / (4.0 * PI * EPSILON_0)
}

pub fn mm(value: f64) -> f64 {
    value * 1e-3
}

pub fn um(value: f64) -> f64 {
    value * 1e-6
}

/// Cyclic frequency in Hz to angular frequency in rad/s.
pub fn hz_to_angular(f: f64) -> f64 {
    2.0 * PI * f
}

pub fn angular_to_hz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}

/// Charge-to-mass ratio in e/amu to C/kg.
pub fn e_per_amu_to_si(ratio: f64) -> f64 {
    ratio * ELEMENTARY_CHARGE / AMU
}

pub fn si_to_e_per_amu(ratio: f64) -> f64 {
    ratio * AMU / ELEMENTARY_CHARGE
}

pub fn joule_to_ev(energy: f64) -> f64 {
    energy / ELEMENTARY_CHARGE
}

pub fn ev_to_joule(energy: f64) -> f64 {
    energy * ELEMENTARY_CHARGE
}
