//! Spin-spin coupling rates between ions in neighbouring wells and how they
//! scale when the lattice is shrunk at fixed stability parameter.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics::{DriveConfig, IonSpecies};
use crate::error::{Error, Result};
use crate::units::{EPSILON_0, HBAR, PLANCK};

/// Inputs of the coupling formula: pushing force `force` (N), ion spacing
/// `d` (m) and in-plane secular frequency `omega` (rad/s).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    pub force: f64,
    pub d: f64,
    pub omega: f64,
    pub ion: IonSpecies,
}

impl CouplingParams {
    fn validated(&self) -> Result<()> {
        for (name, v) in [("force", self.force), ("d", self.d), ("omega", self.omega)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        self.ion.validated()?;
        Ok(())
    }
}

/// Coupling energy `Q^2 F^2 / (8 pi eps0 m^2 d^3 omega^4)` in J. The ion
/// charge stands in for `e`, so multiply charged ions are covered.
pub fn j_energy(p: &CouplingParams) -> Result<f64> {
    p.validated()?;
    let q = p.ion.charge;
    Ok(q * q * p.force * p.force
        / (8.0 * PI * EPSILON_0 * p.ion.mass * p.ion.mass * p.d.powi(3) * p.omega.powi(4)))
}

/// `J / h` in Hz.
pub fn j_coupling(p: &CouplingParams) -> Result<f64> {
    Ok(j_energy(p)? / PLANCK)
}

/// `J / hbar` in rad/s.
pub fn j_coupling_hbar(p: &CouplingParams) -> Result<f64> {
    Ok(j_energy(p)? / HBAR)
}

/// Pushing force that gives `j_over_h` (Hz).
pub fn force_for_coupling(j_over_h: f64, d: f64, omega: f64, ion: &IonSpecies) -> Result<f64> {
    let unit = CouplingParams { force: 1.0, d, omega, ion: *ion };
    let per_f2 = j_coupling(&unit)?;
    if !(j_over_h >= 0.0 && j_over_h.is_finite()) {
        return Err(Error::InvalidParameter(format!("coupling must be >= 0, got {j_over_h}")));
    }
    Ok((j_over_h / per_f2).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambDicke {
    pub eta: f64,
    /// `eta < 1`
    pub in_regime: bool,
}

/// `eta = (2 pi / lambda) sqrt(hbar / (2 m omega))`.
pub fn lamb_dicke(ion: &IonSpecies, omega: f64, wavelength: f64) -> Result<LambDicke> {
    ion.validated()?;
    if !(omega > 0.0 && wavelength > 0.0 && omega.is_finite() && wavelength.is_finite()) {
        return Err(Error::InvalidParameter("omega and wavelength must be positive".into()));
    }
    let eta = 2.0 * PI / wavelength * (HBAR / (2.0 * ion.mass * omega)).sqrt();
    Ok(LambDicke { eta, in_regime: eta < 1.0 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingConstraint {
    pub q_target: f64,
    /// eV
    pub depth_min: f64,
    pub v_max: f64,
}

impl Default for ScalingConstraint {
    fn default() -> Self {
        Self { q_target: 0.3, depth_min: 0.1, v_max: f64::INFINITY }
    }
}

impl ScalingConstraint {
    fn validated(&self) -> Result<()> {
        if !(self.q_target > 0.0 && self.q_target < 0.908) {
            return Err(Error::InvalidParameter(format!("q target must lie in (0, 0.908), got {}", self.q_target)));
        }
        if !(self.depth_min >= 0.0 && self.v_max > 0.0) {
            return Err(Error::InvalidParameter("depth_min must be >= 0 and v_max > 0".into()));
        }
        Ok(())
    }
}

/// Reference trap the scan is scaled from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingBase {
    pub d: f64,
    pub r1: f64,
    /// Depth (eV) at `drive`.
    pub depth: f64,
    pub drive: DriveConfig,
    pub ion: IonSpecies,
}

impl ScalingBase {
    /// `q = 2 Q V / (m r1^2 Omega^2)` of the base drive.
    pub fn q(&self) -> f64 {
        2.0 * self.ion.charge * self.drive.v_rf / (self.ion.mass * self.r1 * self.r1 * self.drive.omega.powi(2))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ScanMode {
    /// Hold V and q, so depth stays put.
    #[default]
    FixedVoltage,
    /// After loading at the fixed-voltage point, lower V at fixed Omega
    /// until the depth reaches `depth_floor` (eV).
    PostLoadReduction { depth_floor: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub d: f64,
    pub r1: f64,
    pub v_rf: f64,
    pub omega_drive: f64,
    pub omega_r: f64,
    pub q: f64,
    /// eV
    pub depth: f64,
    pub j_over_h: f64,
    pub eta: f64,
    pub feasible: bool,
    /// Coupling relative to the fixed-voltage point at the same `d`.
    pub j_gain: f64,
}

/// Scale the base trap to each spacing in `d_values` with `r1` proportional
/// to `d`, the rf amplitude held at the base value, and `Omega` solved from
/// `q_target`. Depth scales as `q V`.
pub fn scaling_scan(
    base: &ScalingBase,
    d_values: &[f64],
    constraint: &ScalingConstraint,
    force: f64,
    wavelength: f64,
    mode: ScanMode,
) -> Result<Vec<ScanRow>> {
    constraint.validated()?;
    base.ion.validated()?;
    base.drive.validated()?;
    if !(base.d > 0.0 && base.r1 > 0.0 && base.depth > 0.0) {
        return Err(Error::InvalidParameter("base d, r1 and depth must be positive".into()));
    }
    let v = base.drive.v_rf;
    if v > constraint.v_max {
        return Err(Error::Infeasible(format!(
            "rf amplitude {v} V exceeds the limit {} V, so no drive frequency reaches q = {}",
            constraint.v_max, constraint.q_target
        )));
    }
    let ion = base.ion;
    let depth_per_qv = base.depth / (base.q() * v);
    let q = constraint.q_target;
    d_values
        .iter()
        .map(|&d| {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidParameter(format!("spacing must be positive, got {d}")));
            }
            let r1 = base.r1 * d / base.d;
            let omega_drive = (2.0 * ion.charge * v / (ion.mass * r1 * r1 * q)).sqrt();
            let omega_r = q * omega_drive / 2f64.sqrt();
            let depth = depth_per_qv * q * v;
            let j_fixed = j_coupling(&CouplingParams { force, d, omega: omega_r, ion })?;
            let (v_row, q_row, w_row, depth_row) = match mode {
                ScanMode::FixedVoltage => (v, q, omega_r, depth),
                ScanMode::PostLoadReduction { depth_floor } => {
                    // depth goes as V^2 at fixed Omega
                    let scale = (depth_floor / depth).sqrt().min(1.0);
                    (v * scale, q * scale, omega_r * scale, depth * scale * scale)
                }
            };
            let j = j_coupling(&CouplingParams { force, d, omega: w_row, ion })?;
            let eta = lamb_dicke(&ion, w_row, wavelength)?.eta;
            let depth_ok = match mode {
                ScanMode::FixedVoltage => depth_row >= constraint.depth_min,
                ScanMode::PostLoadReduction { .. } => depth >= constraint.depth_min,
            };
            Ok(ScanRow {
                d,
                r1,
                v_rf: v_row,
                omega_drive,
                omega_r: w_row,
                q: q_row,
                depth: depth_row,
                j_over_h: j,
                eta,
                feasible: depth_ok && v_row <= constraint.v_max,
                j_gain: j / j_fixed,
            })
        })
        .collect()
}

pub const SCAN_CSV_HEADER: &str = "d_m,r1_m,V_volt,Omega_rad_s,omega_r_rad_s,q,depth_eV,J_over_h_Hz,eta,feasible";

pub fn write_scan_csv<W: Write>(mut w: W, rows: &[ScanRow]) -> Result<()> {
    writeln!(w, "{SCAN_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            r.d, r.r1, r.v_rf, r.omega_drive, r.omega_r, r.q, r.depth, r.j_over_h, r.eta, r.feasible
        )?;
    }
    Ok(())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{hz_to_angular, AMU, SR88_ION_MASS_AMU};
    use approx::assert_relative_eq;

    fn anchor() -> CouplingParams {
        CouplingParams { force: 9.7e-21, d: 50e-6, omega: hz_to_angular(250e3), ion: IonSpecies::strontium88() }
    }

    #[test]
    fn anchor_force_and_inversion() {
        let p = anchor();
        let f = force_for_coupling(1e3, p.d, p.omega, &p.ion).unwrap();
        assert!((f - 9.7e-21).abs() < 0.1e-21, "{f}");
        let j = j_coupling(&CouplingParams { force: f, ..p }).unwrap();
        assert_relative_eq!(j, 1e3, max_relative = 1e-14);
        assert_relative_eq!(j_coupling_hbar(&CouplingParams { force: f, ..p }).unwrap(), 2.0 * PI * 1e3, max_relative = 1e-14);
    }

    #[test]
    fn homogeneity() {
        let p = anchor();
        let j = j_coupling(&p).unwrap();
        assert_relative_eq!(j_coupling(&CouplingParams { force: 2.0 * p.force, ..p }).unwrap(), 4.0 * j, max_relative = 1e-14);
        assert_relative_eq!(j_coupling(&CouplingParams { omega: 2.0 * p.omega, ..p }).unwrap(), j / 16.0, max_relative = 1e-14);
    }

    #[test]
    fn lamb_dicke_by_hand() {
        let ion = IonSpecies::strontium88();
        let w = hz_to_angular(250e3);
        let eta = lamb_dicke(&ion, w, 532e-9).unwrap();
        // k x0 with x0 = sqrt(hbar / (2 m omega)), written out separately
        let m = SR88_ION_MASS_AMU * AMU;
        let x0 = (1.054_571_817e-34 / (2.0 * m * w)).sqrt();
        assert_relative_eq!(eta.eta, 2.0 * PI / 532e-9 * x0, max_relative = 1e-9);
        assert!(eta.in_regime);
        assert_relative_eq!(lamb_dicke(&ion, 4.0 * w, 532e-9).unwrap().eta, eta.eta / 2.0, max_relative = 1e-14);
        let heavy = IonSpecies::new(ion.charge, 4.0 * ion.mass).unwrap();
        assert_relative_eq!(lamb_dicke(&heavy, w, 532e-9).unwrap().eta, eta.eta / 2.0, max_relative = 1e-14);
    }

    fn base() -> ScalingBase {
        ScalingBase { d: 1.64e-3, r1: 3.1e-3, depth: 0.3, drive: DriveConfig::reference(), ion: IonSpecies::strontium88() }
    }

    #[test]
    fn scan_invariants() {
        let ds: Vec<f64> = (0..=10).map(|i| 50e-6 * (1.64e-3f64 / 50e-6).powf(i as f64 / 10.0)).collect();
        let rows = scaling_scan(&base(), &ds, &ScalingConstraint::default(), 1e-20, 532e-9, ScanMode::FixedVoltage).unwrap();
        let j: Vec<f64> = rows.iter().map(|r| r.j_over_h).collect();
        assert!((log_log_slope(&ds, &j) - 1.0).abs() < 1e-9);
        assert!(j.windows(2).all(|w| w[1] > w[0]));
        let od0 = rows[0].omega_drive * rows[0].d;
        for r in &rows {
            assert_relative_eq!(r.omega_drive * r.d, od0, max_relative = 1e-13);
            assert_relative_eq!(r.depth, rows[0].depth, max_relative = 1e-13);
            assert_relative_eq!(r.q, 0.3, max_relative = 1e-15);
        }
    }

    #[test]
    fn halving_spacing() {
        let rows = scaling_scan(&base(), &[1e-3, 0.5e-3], &ScalingConstraint::default(), 1e-20, 532e-9, ScanMode::FixedVoltage)
            .unwrap();
        assert_relative_eq!(rows[1].omega_drive, 2.0 * rows[0].omega_drive, max_relative = 1e-13);
        assert_relative_eq!(rows[1].omega_r, 2.0 * rows[0].omega_r, max_relative = 1e-13);
        assert_relative_eq!(rows[1].j_over_h, rows[0].j_over_h / 2.0, max_relative = 1e-13);
    }

    #[test]
    fn post_load_reduction_gains_coupling() {
        let rows = scaling_scan(
            &base(),
            &[50e-6],
            &ScalingConstraint::default(),
            1e-20,
            532e-9,
            ScanMode::PostLoadReduction { depth_floor: 0.01 },
        )
        .unwrap();
        let r = rows[0];
        assert!(r.v_rf < 300.0 && r.j_gain > 1.0);
        // J goes as V^-4 at fixed Omega
        assert_relative_eq!(r.j_gain, (300.0 / r.v_rf).powi(4), max_relative = 1e-12);
        assert_relative_eq!(r.depth, 0.01, max_relative = 1e-12);
    }

    #[test]
    fn voltage_cap_is_infeasible() {
        let c = ScalingConstraint { v_max: 100.0, ..Default::default() };
        let r = scaling_scan(&base(), &[1e-4], &c, 1e-20, 532e-9, ScanMode::FixedVoltage);
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }

    #[test]
    fn csv_columns() {
        let rows = scaling_scan(&base(), &[1e-4], &ScalingConstraint::default(), 1e-20, 532e-9, ScanMode::FixedVoltage).unwrap();
        let mut buf = Vec::new();
        write_scan_csv(&mut buf, &rows).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let cols = SCAN_CSV_HEADER.split(',').count();
        assert!(s.lines().all(|l| l.split(',').count() == cols));
    }
}
