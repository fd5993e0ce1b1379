use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ode::dopri5;
use super::{DriveConfig, IonSpecies};
use crate::error::{Error, Result};

/// Multipliers may exceed the unit circle by this much and still count as stable.
pub const MULTIPLIER_TOLERANCE: f64 = 1e-9;
const ODE_TOL: f64 = 1e-12;

/// Upper end of the q range searched by [`stability_boundary`].
pub const Q_SEARCH_MAX: f64 = 2.0;
const Q_SCAN_STEPS: usize = 400;

/// Floquet analysis of one point of the (a, q) plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityPoint {
    pub a: f64,
    pub q: f64,
    pub stable: bool,
    /// Characteristic exponent beta: multipliers are `exp(+-i pi beta)` times
    /// the damping factor, so the secular frequency is `beta Omega / 2`.
    pub floquet_exponent: f64,
    /// Largest multiplier modulus over one drive period.
    pub max_multiplier: f64,
}

/// Mathieu parameters `a = 8 Q U0 / (m r0^2 Omega^2)` and `q = 2 Q V / (m r0^2 Omega^2)`.
pub fn mathieu_parameters(ion: &IonSpecies, drive: &DriveConfig, r0: f64) -> Result<(f64, f64)> {
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(Error::InvalidParameter(format!("r0 must be positive, got {r0}")));
    }
    let denom = ion.mass * r0 * r0 * drive.omega * drive.omega;
    Ok((8.0 * ion.charge * drive.u0 / denom, 2.0 * ion.charge * drive.v_rf / denom))
}

/// Monodromy matrix of `u'' + 2 g u' + (a - 2 q cos 2 tau) u = 0` over one
/// period `tau = pi`, where `g = drag_gamma / Omega`.
fn monodromy(a: f64, q: f64, drag: f64) -> [[f64; 2]; 2] {
    let rhs = |tau: f64, y: &[f64; 4]| {
        let k = a - 2.0 * q * (2.0 * tau).cos();
        [y[1], -2.0 * drag * y[1] - k * y[0], y[3], -2.0 * drag * y[3] - k * y[2]]
    };
    let y = dopri5(rhs, 0.0, PI, [1.0, 0.0, 0.0, 1.0], ODE_TOL);
    [[y[0], y[2]], [y[1], y[3]]]
}

/// Stability of the (optionally damped) Mathieu equation in standard form.
/// `drag_gamma_over_omega` is the velocity damping rate divided by the drive
/// angular frequency.
pub fn is_stable(a: f64, q: f64, drag_gamma_over_omega: f64) -> StabilityPoint {
    let m = monodromy(a, q, drag_gamma_over_omega);
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = tr * tr / 4.0 - det;
    let (max_multiplier, beta) = if disc < 0.0 {
        // complex pair on a circle of radius sqrt(det)
        let r = det.max(0.0).sqrt();
        let cos = (tr / 2.0 / r).clamp(-1.0, 1.0);
        (r, cos.acos() / PI)
    } else {
        let s = disc.sqrt();
        let l1 = tr / 2.0 + s;
        let l2 = tr / 2.0 - s;
        let big = if l1.abs() >= l2.abs() { l1 } else { l2 };
        (big.abs(), if big < 0.0 { 1.0 } else { 0.0 })
    };
    StabilityPoint { a, q, stable: max_multiplier <= 1.0 + MULTIPLIER_TOLERANCE, floquet_exponent: beta, max_multiplier }
}

/// Upper edge in q of the first stable interval at fixed `a`, by scanning
/// `(0, 2)` and bisecting the transition.
pub fn stability_boundary(a: f64, drag: f64) -> Result<f64> {
    let stable = |q: f64| is_stable(a, q, drag).stable;
    let dq = Q_SEARCH_MAX / Q_SCAN_STEPS as f64;
    let mut seen_stable = false;
    let mut lo = 0.0;
    let mut hi = None;
    for i in 1..=Q_SCAN_STEPS {
        let q = i as f64 * dq;
        if stable(q) {
            seen_stable = true;
            lo = q;
        } else if seen_stable {
            hi = Some(q);
            break;
        }
    }
    let Some(mut hi) = hi else {
        return Err(Error::BracketFailure { q_max: Q_SEARCH_MAX });
    };
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if stable(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Stability over the tensor grid `a_values x q_values`, `a` outermost.
pub fn stability_map(a_values: &[f64], q_values: &[f64], drag: f64) -> Vec<StabilityPoint> {
    let pts: Vec<(f64, f64)> = a_values.iter().flat_map(|&a| q_values.iter().map(move |&q| (a, q))).collect();
    pts.par_iter().map(|&(a, q)| is_stable(a, q, drag)).collect()
}

pub const STABILITY_CSV_HEADER: &str = "a,q,stable,exponent";

pub fn write_stability_csv<W: Write>(mut w: W, points: &[StabilityPoint]) -> Result<()> {
    writeln!(w, "{STABILITY_CSV_HEADER}")?;
    for p in points {
        writeln!(w, "{:e},{:e},{},{:e}", p.a, p.q, p.stable as u8, p.floquet_exponent)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn strontium_parameters() {
        let (a, q) = mathieu_parameters(&IonSpecies::strontium88(), &DriveConfig::reference(), 3.1e-3).unwrap();
        assert_eq!(a, 0.0);
        assert!((q - 0.0292).abs() < 5e-4, "{q}");
        let mut fast = DriveConfig::reference();
        fast.omega *= 2.0;
        let (_, q2) = mathieu_parameters(&IonSpecies::strontium88(), &fast, 3.1e-3).unwrap();
        assert_relative_eq!(q2, q / 4.0, max_relative = 1e-14);
    }

    #[test]
    fn first_region() {
        assert!(is_stable(0.0, 0.3, 0.0).stable);
        assert!(!is_stable(0.0, 1.0, 0.0).stable);
        assert!(is_stable(0.0, 0.95, 0.2).stable);
    }

    #[test]
    fn exponent_matches_adiabatic_limit() {
        // beta ~ q / sqrt(2) for small q
        let p = is_stable(0.0, 0.05, 0.0);
        assert_relative_eq!(p.floquet_exponent, 0.05 / 2f64.sqrt(), max_relative = 1e-3);
    }

    #[test]
    fn boundary_at_zero_a() {
        let q = stability_boundary(0.0, 0.0).unwrap();
        assert!((q - 0.908).abs() < 0.005, "{q}");
        assert!(stability_boundary(0.0, 0.2).unwrap() > 0.908);
        let neg = stability_boundary(-0.02, 0.0).unwrap();
        assert!(neg > 0.0 && neg.is_finite());
    }

    #[test]
    fn bracket_failure_when_never_stable() {
        assert!(matches!(stability_boundary(-5.0, 0.0), Err(Error::BracketFailure { .. })));
    }

    #[test]
    fn map_csv() {
        let pts = stability_map(&[0.0], &[0.3, 1.0], 0.0);
        let mut buf = Vec::new();
        write_stability_csv(&mut buf, &pts).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 3);
        assert!(s.lines().nth(1).unwrap().contains(",1,"));
    }
}
