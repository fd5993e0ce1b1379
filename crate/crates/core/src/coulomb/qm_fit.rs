use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{BiasCoefficient, DriveConfig};
use crate::error::{Error, Result};
use crate::lsq::{levenberg_marquardt, LmOptions};

/// Charge-to-mass ratio (C/kg) fitted to axial frequencies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChargeToMassFit {
    pub q_over_m: f64,
    pub std_error: f64,
    /// Root-mean-square frequency residual, rad/s.
    pub rms_residual: f64,
}

/// `omega_z^2 = 8 k^2 V^2 / (Omega^2 r1^4) - 8 c alpha k U / (r1 z1)` with `k = Q/m`.
fn model(k: f64, omega: f64, v: f64, r1: f64, alpha: f64, z1: f64, u: f64, c: f64) -> (f64, f64) {
    let a = 8.0 * v * v / (omega * omega * r1.powi(4));
    let b = 8.0 * c * alpha * u / (r1 * z1);
    let w2 = (a * k * k - b * k).max(0.0);
    let w = w2.sqrt();
    let dw = if w > 0.0 { (2.0 * a * k - b) / (2.0 * w) } else { 0.0 };
    (w, dw)
}

/// Least-squares `Q/m` from `(Omega, omega_z)` pairs in rad/s at rf amplitude
/// `drive.v_rf` and top-plate bias `u`. Needs three distinct drive
/// frequencies, or two when `u == 0` (then `omega_z` is linear in `1/Omega`).
pub fn fit_charge_to_mass(
    data: &[(f64, f64)],
    drive: &DriveConfig,
    r1: f64,
    alpha: f64,
    z1: f64,
    u: f64,
    coefficient: BiasCoefficient,
) -> Result<ChargeToMassFit> {
    let min = if u == 0.0 { 2 } else { 3 };
    if data.len() < min {
        return Err(Error::DegenerateData(format!("{} points, need at least {min}", data.len())));
    }
    let mut omegas: Vec<f64> = data.iter().map(|d| d.0).collect();
    omegas.sort_by(f64::total_cmp);
    if omegas.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::DegenerateData("drive frequencies must be distinct".into()));
    }
    if data.iter().any(|&(o, w)| !(o > 0.0 && w > 0.0 && o.is_finite() && w.is_finite())) {
        return Err(Error::DegenerateData("frequencies must be positive and finite".into()));
    }
    if !(r1 > 0.0 && z1 > 0.0 && drive.v_rf > 0.0) {
        return Err(Error::InvalidParameter("r1, z1 and V must be positive".into()));
    }
    let c = coefficient.value();
    let v = drive.v_rf;
    // unbiased estimate as the starting point
    let k0 = data.iter().map(|&(o, w)| w * o * r1 * r1 / (2f64.sqrt() * 2.0 * v)).sum::<f64>() / data.len() as f64;
    // fit in units of k0 to keep the normal equations well scaled
    let residuals = |p: &DVector<f64>| {
        let k = p[0] * k0;
        let mut r = DVector::zeros(data.len());
        let mut j = DMatrix::zeros(data.len(), 1);
        for (i, &(o, w)) in data.iter().enumerate() {
            let (m, dm) = model(k, o, v, r1, alpha, z1, u, c);
            r[i] = m - w;
            j[(i, 0)] = dm * k0;
        }
        (r, j)
    };
    let fit = levenberg_marquardt(residuals, DVector::from_element(1, 1.0), &LmOptions::default())?;
    Ok(ChargeToMassFit {
        q_over_m: fit.params[0] * k0,
        std_error: fit.std_error(0) * k0.abs(),
        rms_residual: (fit.ssr / data.len() as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{e_per_amu_to_si, hz_to_angular};
    use approx::assert_relative_eq;

    fn synth(k: f64, u: f64, omegas_hz: &[f64]) -> Vec<(f64, f64)> {
        let c = BiasCoefficient::AsPrinted.value();
        omegas_hz
            .iter()
            .map(|&f| {
                let o = hz_to_angular(f);
                (o, model(k, o, 255.0, 3.1e-3, -4.0, 0.019, u, c).0)
            })
            .collect()
    }

    #[test]
    fn round_trip_with_bias() {
        let k = e_per_amu_to_si(1.9e-9);
        let data = synth(k, 2.5, &[800.0, 1000.0, 1400.0, 1800.0, 2200.0]);
        let drive = DriveConfig::new(255.0, 1.0).unwrap();
        let fit = fit_charge_to_mass(&data, &drive, 3.1e-3, -4.0, 0.019, 2.5, BiasCoefficient::AsPrinted).unwrap();
        assert_relative_eq!(fit.q_over_m, k, max_relative = 1e-8);
    }

    #[test]
    fn two_points_suffice_without_bias() {
        let k = e_per_amu_to_si(1.9e-9);
        let data = synth(k, 0.0, &[1000.0, 2000.0]);
        let drive = DriveConfig::new(255.0, 1.0).unwrap();
        let fit = fit_charge_to_mass(&data, &drive, 3.1e-3, -4.0, 0.019, 0.0, BiasCoefficient::AsPrinted).unwrap();
        assert_relative_eq!(fit.q_over_m, k, max_relative = 1e-10);
    }

    #[test]
    fn degenerate_inputs() {
        let drive = DriveConfig::new(255.0, 1.0).unwrap();
        let r = fit_charge_to_mass(&[(1.0, 2.0), (1.0, 2.0), (3.0, 1.0)], &drive, 3.1e-3, -4.0, 0.019, 1.0, BiasCoefficient::AsPrinted);
        assert!(matches!(r, Err(Error::DegenerateData(_))));
        let r = fit_charge_to_mass(&[(1.0, 2.0), (2.0, 1.0)], &drive, 3.1e-3, -4.0, 0.019, 1.0, BiasCoefficient::AsPrinted);
        assert!(matches!(r, Err(Error::DegenerateData(_))));
    }
}
