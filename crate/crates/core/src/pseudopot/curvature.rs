use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use super::pseudo_prefactor;
use crate::dynamics::{DriveConfig, IonSpecies};
use crate::error::{Error, Result};
use crate::grid::ScalarField3D;
use crate::interp::CubicSpline3D;

/// Nodes kept on each side of the site when building the local spline.
const HALF_WIDTH_NODES: usize = 12;

/// Continuous pseudopotential around one site, from a tricubic spline of the
/// normalized rf potential. Energies in J, lengths in m.
#[derive(Clone, Debug)]
pub struct SiteModel {
    spline: CubicSpline3D,
    /// J per (1/m^2) of |grad phi|^2
    k: f64,
    /// Constant force-like term Q U / z1 (J/m) added to dPsi/dz.
    bias_slope: f64,
    mass: f64,
    step: f64,
}

impl SiteModel {
    pub fn new(
        phi: &ScalarField3D,
        centre: [f64; 3],
        ion: &IonSpecies,
        drive: &DriveConfig,
        z1: Option<f64>,
    ) -> Result<Self> {
        ion.validated()?;
        drive.validated()?;
        let l = phi.layout;
        let c = l.nearest(centre);
        let lo = [
            c[0].saturating_sub(HALF_WIDTH_NODES),
            c[1].saturating_sub(HALF_WIDTH_NODES),
            c[2].saturating_sub(HALF_WIDTH_NODES),
        ];
        let hi = [c[0] + HALF_WIDTH_NODES, c[1] + HALF_WIDTH_NODES, c[2] + HALF_WIDTH_NODES];
        let spline = CubicSpline3D::new(&phi.crop(lo, hi))?;
        let bias_slope = if drive.u_top != 0.0 {
            let z1 = z1.ok_or(Error::MissingZ1)?;
            ion.charge * drive.u_top / z1
        } else {
            0.0
        };
        let h = l.spacing.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(Self { spline, k: pseudo_prefactor(ion, drive), bias_slope, mass: ion.mass, step: h / 20.0 })
    }

    pub fn spline(&self) -> &CubicSpline3D {
        &self.spline
    }

    /// Gradient of the normalized rf potential (1/m).
    pub fn rf_gradient(&self, p: [f64; 3]) -> [f64; 3] {
        self.spline.gradient(p)
    }

    /// Pseudopotential in J, relative to the bias term at z = 0.
    pub fn psi(&self, p: [f64; 3]) -> f64 {
        let g = self.spline.gradient(p);
        self.k * (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]) + self.bias_slope * p[2]
    }

    pub fn grad_psi(&self, p: [f64; 3]) -> [f64; 3] {
        let s = self.spline.sample(p);
        let g = s.gradient;
        let h = s.hessian;
        let mut out = [0.0; 3];
        for a in 0..3 {
            out[a] = 2.0 * self.k * (h[a][0] * g[0] + h[a][1] * g[1] + h[a][2] * g[2]);
        }
        out[2] += self.bias_slope;
        out
    }

    /// Hessian of the pseudopotential by central differences of its gradient.
    pub fn hessian_psi(&self, p: [f64; 3]) -> Matrix3<f64> {
        let mut m = Matrix3::zeros();
        for b in 0..3 {
            let mut hi = p;
            let mut lo = p;
            hi[b] += self.step;
            lo[b] -= self.step;
            let (gh, gl) = (self.grad_psi(hi), self.grad_psi(lo));
            for a in 0..3 {
                m[(a, b)] = (gh[a] - gl[a]) / (2.0 * self.step);
            }
        }
        0.5 * (m + m.transpose())
    }

    /// Newton iteration for the pseudopotential minimum.
    pub fn minimum(&self, start: [f64; 3]) -> Result<[f64; 3]> {
        let mut p = start;
        let max_step = 20.0 * self.step;
        for _ in 0..100 {
            let g = Vector3::from(self.grad_psi(p));
            let h = self.hessian_psi(p);
            let Some(chol) = h.cholesky() else {
                return Err(Error::NoMinimum("pseudopotential Hessian is not positive definite".into()));
            };
            let mut d = -chol.solve(&g);
            let n = d.norm();
            if n > max_step {
                d *= max_step / n;
            }
            for a in 0..3 {
                p[a] += d[a];
            }
            if n < 1e-9 * self.step {
                return Ok(p);
            }
        }
        Err(Error::NoMinimum("Newton iteration for the minimum did not settle".into()))
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }
}

/// Secular frequencies from the curvature of the solved pseudopotential.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureFrequencies {
    pub position: [f64; 3],
    /// Principal angular frequencies (rad/s), ascending.
    pub omega: [f64; 3],
    pub axes: [[f64; 3]; 3],
    /// Mean of the two modes closest to the plane.
    pub omega_r: f64,
    /// Mode most aligned with z.
    pub omega_z: f64,
}

/// Locate the pseudopotential minimum near `start` and diagonalize its Hessian.
pub fn curvature_frequencies(
    phi: &ScalarField3D,
    start: [f64; 3],
    ion: &IonSpecies,
    drive: &DriveConfig,
    z1: Option<f64>,
) -> Result<CurvatureFrequencies> {
    let model = SiteModel::new(phi, start, ion, drive, z1)?;
    let position = model.minimum(start)?;
    frequencies_at(&model, position)
}

pub(crate) fn frequencies_at(model: &SiteModel, position: [f64; 3]) -> Result<CurvatureFrequencies> {
    let eig = SymmetricEigen::new(model.hessian_psi(position));
    let mut modes: Vec<(f64, [f64; 3])> = (0..3)
        .map(|i| {
            let v = eig.eigenvectors.column(i);
            (eig.eigenvalues[i], [v[0], v[1], v[2]])
        })
        .collect();
    if modes.iter().any(|m| m.0 <= 0.0) {
        return Err(Error::NoMinimum("pseudopotential curvature is not positive".into()));
    }
    modes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let omega = [0, 1, 2].map(|i| (modes[i].0 / model.mass()).sqrt());
    let axes = [0, 1, 2].map(|i| modes[i].1);
    let iz = (0..3).max_by(|&a, &b| axes[a][2].abs().total_cmp(&axes[b][2].abs())).unwrap();
    let others: Vec<usize> = (0..3).filter(|&i| i != iz).collect();
    Ok(CurvatureFrequencies {
        position,
        omega,
        axes,
        omega_r: 0.5 * (omega[others[0]] + omega[others[1]]),
        omega_z: omega[iz],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldsolver::multipole_potential;
    use crate::grid::GridLayout;
    use approx::assert_relative_eq;

    #[test]
    fn quadrupole_curvature_matches_closed_form() {
        let (r1, h) = (3.1e-3, 1e-4);
        let l = GridLayout::cubic([31, 31, 31], [-15.0 * h + 3e-6, -15.0 * h, -15.0 * h + 1e-5], h).unwrap();
        let phi = ScalarField3D::from_fn(l, |p| {
            multipole_potential((p[0] * p[0] + p[1] * p[1]).sqrt(), p[2], 1.0, r1, 0.0)
        });
        let ion = IonSpecies::strontium88();
        let drive = DriveConfig::reference();
        let f = curvature_frequencies(&phi, [1e-5, 0.0, 2e-5], &ion, &drive, None).unwrap();
        let wz = 2.0 * 2f64.sqrt() * ion.charge * drive.v_rf / (ion.mass * drive.omega * r1 * r1);
        // mirror boundaries of the cropped spline leave a few ppm
        assert_relative_eq!(f.omega_z, wz, max_relative = 3e-5);
        assert_relative_eq!(f.omega_r, wz / 2.0, max_relative = 3e-5);
        for c in f.position {
            assert!(c.abs() < 1e-9);
        }
    }
}
